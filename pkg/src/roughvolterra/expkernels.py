"""Closed-form exponential integrals for piecewise-linear cell calculus.

Pure function namespace.  Everything is vectorised over numpy arrays and
guarded against the near-degenerate exponent regimes (lambda ~ mu, or
rates ~ 0) with series fallbacks, so values stay smooth to ~1e-12 relative
across the switch points.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["phi1", "phi2", "phi3", "phi4", "e0", "exp_int", "ramp_int"]

# switch to the 4-term Taylor fallback of exp_int when |lambda-mu|*dt < theta;
# below ~1e-5 the closed form's cancellation noise (eps/theta) would exceed
# the series truncation error, so the threshold sits just above that regime
EXP_SWITCH_THETA = 3e-5
# switch to the J_k series of ramp_int when eta*dt < theta
RAMP_SWITCH_THETA = 1e-4

_PHI_TAYLOR_CUT = 0.1
_PHI_TAYLOR_TERMS = 14


def _phi_taylor(z, k):
    # phi_k(z) = sum_{j>=0} z^j / (j+k)!,  truncated; accurate for |z| <= 0.1
    acc = np.zeros_like(z)
    for j in range(_PHI_TAYLOR_TERMS, -1, -1):
        acc = acc * z + 1.0 / math.factorial(j + k)
    return acc


def phi1(z):
    """phi_1(z) = (e^z - 1)/z, with phi_1(0) = 1."""
    z = np.asarray(z, dtype=float)
    safe = np.where(z == 0.0, 1.0, z)
    out = np.where(z == 0.0, 1.0, np.expm1(safe) / safe)
    return out if out.ndim else float(out)


def _phi_k(z, k, closed):
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < _PHI_TAYLOR_CUT
    safe = np.where(small, 1.0, z)
    out = np.where(small, _phi_taylor(np.where(small, z, 0.0), k), closed(safe))
    return out if out.ndim else float(out)


def phi2(z):
    """phi_2(z) = (e^z - 1 - z)/z^2, with phi_2(0) = 1/2."""
    return _phi_k(z, 2, lambda w: (np.expm1(w) - w) / w**2)


def phi3(z):
    """phi_3(z) = (e^z - 1 - z - z^2/2)/z^3, with phi_3(0) = 1/6."""
    return _phi_k(z, 3, lambda w: (np.expm1(w) - w - 0.5 * w**2) / w**3)


def phi4(z):
    """phi_4(z) = (e^z - 1 - z - z^2/2 - z^3/6)/z^4, with phi_4(0) = 1/24."""
    return _phi_k(z, 4, lambda w: (np.expm1(w) - w - 0.5 * w**2 - w**3 / 6.0) / w**4)


def e0(xi, dt):
    """int_0^dt e^{-xi r} dr = (1 - e^{-xi dt}) / xi, with limit dt at xi = 0."""
    xi = np.asarray(xi, dtype=float)
    dt = np.asarray(dt, dtype=float)
    out = dt * phi1(-xi * dt)
    return out if np.ndim(out) else float(out)


def exp_int(lam, mu, dt):
    """int_0^dt e^{-lam (dt-r)} e^{-mu r} dr.

    Closed form (e^{-mu dt} - e^{-lam dt})/(lam - mu), with a 4-term Taylor
    fallback when |lam - mu| dt < EXP_SWITCH_THETA.  Exact limits:
    lam = mu -> dt e^{-lam dt}; lam = mu = 0 -> dt.
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    dt = np.asarray(dt, dtype=float)
    d = lam - mu
    z = d * dt
    small = np.abs(z) < EXP_SWITCH_THETA
    safe_d = np.where(small, 1.0, d)
    closed = (np.exp(-mu * dt) - np.exp(-lam * dt)) / safe_d
    series = np.exp(-mu * dt) * dt * (1.0 - z / 2.0 + z**2 / 6.0 - z**3 / 24.0)
    out = np.where(small, series, closed)
    return out if out.ndim else float(out)


def ramp_int(xi, eta, dt):
    """int_0^dt e^{-xi (dt-r)} (1 - e^{-eta r})/eta dr.

    The eta -> 0 limit is J_1 = int_0^dt e^{-xi(dt-r)} r dr.  Uses the
    difference of two exp_int values for well-separated eta and a J_k
    series in eta below RAMP_SWITCH_THETA.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    dt = np.asarray(dt, dtype=float)
    z = -xi * dt
    j1 = dt**2 * phi2(z)
    j2 = dt**3 * 2.0 * phi3(z)
    j3 = dt**4 * 6.0 * phi4(z)
    small = np.abs(eta * dt) < RAMP_SWITCH_THETA
    series = j1 - eta * j2 / 2.0 + eta**2 * j3 / 6.0
    safe_eta = np.where(small, 1.0, eta)
    closed = (e0(xi, dt) - exp_int(xi, eta, dt)) / safe_eta
    out = np.where(small, series, closed)
    return out if out.ndim else float(out)
