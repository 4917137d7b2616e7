"""Discrete increment calculus on a time grid.

k-increments (functions of 1, 2 or 3 ordered grid times that vanish when
consecutive arguments coincide), the coboundary operator ``delta``, its
exponentially twisted variants, and the Holder / L_beta norms that the
sewing and solver layers are built on.

Everything here is a pure function of immutable inputs.  Two- and
three-index increments are never materialised as dense tables; they are
evaluated lazily through index-based accessors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "TimeGrid",
    "Increment1",
    "Increment2",
    "Increment3",
    "LaplaceIncrement1",
    "LaplaceIncrement2",
    "LaplaceIncrement3",
    "DoubleLaplaceIncrement2",
    "twist",
    "delta1",
    "delta2",
    "delta_tilde",
    "delta_double_tilde",
    "trace_pair",
    "holder_norm2",
    "holder_norm3",
    "lbeta_norm",
    "estimate_holder_exponent",
]


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing sample times on [0, T], starting at 0."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("time grid needs at least 2 points")
        if pts[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not np.all(np.isfinite(pts)):
            raise ValueError("time grid must be finite")

    def __len__(self) -> int:
        return self.points.size

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.points)

    @classmethod
    def uniform(cls, n_cells: int, horizon: float = 1.0) -> "TimeGrid":
        return cls(np.linspace(0.0, horizon, n_cells + 1))

    def index_of(self, t: float) -> int:
        """Index of a grid point equal to ``t`` (up to round-off)."""
        i = int(np.searchsorted(self.points, t))
        for j in (i - 1, i, i + 1):
            if 0 <= j < len(self) and abs(self.points[j] - t) <= 1e-12 * max(1.0, abs(t)):
                return j
        raise ValueError(f"t={t} is not a grid point")


def _check_same_grid(a, b):
    if a.grid is not b.grid and not np.array_equal(a.grid.points, b.grid.points):
        raise ValueError("increments live on different grids")


@dataclass(frozen=True)
class Increment1:
    """A path on the grid: values[i] is the state at grid point i."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape[0] != len(self.grid):
            raise ValueError("values must have one entry per grid point")


@dataclass(frozen=True)
class Increment2:
    """1-increment: lazily evaluated on ordered index pairs i <= j."""

    grid: TimeGrid
    pair_fn: Callable[[int, int], np.ndarray]

    def at(self, i: int, j: int) -> np.ndarray:
        if i > j:
            raise ValueError("pair must be ordered i <= j")
        return self.pair_fn(i, j)


@dataclass(frozen=True)
class Increment3:
    """2-increment: lazily evaluated on ordered index triples i <= j <= k."""

    grid: TimeGrid
    triple_fn: Callable[[int, int, int], np.ndarray]

    def at(self, i: int, j: int, k: int) -> np.ndarray:
        if not i <= j <= k:
            raise ValueError("triple must be ordered i <= j <= k")
        return self.triple_fn(i, j, k)


@dataclass(frozen=True)
class LaplaceIncrement1:
    """Per-atom path: values[i, k] is the state at grid point i, atom k."""

    grid: TimeGrid
    xis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        xis = np.asarray(self.xis, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "xis", xis)
        object.__setattr__(self, "values", vals)
        if np.any(xis < 0):
            raise ValueError("Laplace frequencies must be >= 0")
        if vals.shape[0] != len(self.grid) or vals.shape[1] != xis.size:
            raise ValueError("values must be indexed (time, atom, ...)")


@dataclass(frozen=True)
class LaplaceIncrement2:
    grid: TimeGrid
    xis: np.ndarray
    pair_fn: Callable[[int, int], np.ndarray]

    def at(self, i: int, j: int) -> np.ndarray:
        if i > j:
            raise ValueError("pair must be ordered i <= j")
        return self.pair_fn(i, j)


@dataclass(frozen=True)
class LaplaceIncrement3:
    grid: TimeGrid
    xis: np.ndarray
    triple_fn: Callable[[int, int, int], np.ndarray]

    def at(self, i: int, j: int, k: int) -> np.ndarray:
        if not i <= j <= k:
            raise ValueError("triple must be ordered i <= j <= k")
        return self.triple_fn(i, j, k)


@dataclass(frozen=True)
class DoubleLaplaceIncrement2:
    """1-increment indexed by two Laplace atom sets (xi rows, eta columns)."""

    grid: TimeGrid
    xis: np.ndarray
    etas: np.ndarray
    pair_fn: Callable[[int, int], np.ndarray]

    def at(self, i: int, j: int) -> np.ndarray:
        if i > j:
            raise ValueError("pair must be ordered i <= j")
        return self.pair_fn(i, j)


def twist(xi, s, t):
    """Twist factor a_ts(xi) = exp(-xi (t - s)) - 1, in (-1, 0].

    Accepts scalars or broadcastable arrays.
    """
    xi = np.asarray(xi, dtype=float)
    dt = np.asarray(t, dtype=float) - np.asarray(s, dtype=float)
    if np.any(xi < 0):
        raise ValueError("xi must be >= 0")
    if np.any(dt < 0):
        raise ValueError("need s <= t")
    out = np.expm1(-xi * dt)
    return out if out.ndim else float(out)


def delta1(g: Increment1) -> Increment2:
    """(delta g)_{ts} = g_t - g_s on every ordered grid pair."""
    vals = g.values
    return Increment2(g.grid, lambda i, j: vals[j] - vals[i])


def delta2(h: Increment2) -> Increment3:
    """(delta h)_{tus} = h_{ts} - h_{tu} - h_{us}; exact increments map to 0."""
    return Increment3(h.grid, lambda i, j, k: h.at(i, k) - h.at(j, k) - h.at(i, j))


def _atom_factor(xis: np.ndarray, dt: float, extra_ndim: int) -> np.ndarray:
    # exp(-xi dt) shaped to broadcast over trailing value axes
    return np.exp(-xis * dt).reshape(xis.shape + (1,) * extra_ndim)


def delta_tilde(h):
    """Twisted coboundary: delta minus multiplication by the twist factor.

    On a per-atom path g: (delta~ g)_{ts}(xi) = g_t(xi) - exp(-xi(t-s)) g_s(xi).
    On a per-atom 1-increment B: (delta~ B)_{tus}(xi)
      = B_{ts}(xi) - B_{tu}(xi) - exp(-xi(t-u)) B_{us}(xi).
    Atoms with xi = 0 reduce to the plain delta.
    """
    if isinstance(h, LaplaceIncrement1):
        grid, xis, vals = h.grid, h.xis, h.values
        extra = vals.ndim - 2

        def pair(i, j):
            fac = _atom_factor(xis, grid.points[j] - grid.points[i], extra)
            return vals[j] - fac * vals[i]

        return LaplaceIncrement2(grid, xis, pair)
    if isinstance(h, LaplaceIncrement2):
        grid, xis = h.grid, h.xis

        def triple(i, j, k):
            b_us = h.at(i, j)
            fac = _atom_factor(xis, grid.points[k] - grid.points[j], b_us.ndim - 1)
            return h.at(i, k) - h.at(j, k) - fac * b_us

        return LaplaceIncrement3(grid, xis, triple)
    raise TypeError("delta_tilde expects a LaplaceIncrement1 or LaplaceIncrement2")


def delta_double_tilde(r: DoubleLaplaceIncrement2):
    """Doubly twisted coboundary on two-atom-indexed 1-increments.

    (delta~~ R)_{tus}(xi, eta) = (delta R)_{tus}(xi, eta)
        - a_tu(xi) R_{us}(xi, eta) - R_{tu}(xi, eta) a_us(eta),
    which collapses to R_{ts} - exp(-xi(t-u)) R_{us} - R_{tu} exp(-eta(u-s)).
    """
    grid, xis, etas = r.grid, r.xis, r.etas

    def triple(i, j, k):
        r_us = r.at(i, j)
        r_tu = r.at(j, k)
        extra = r_us.ndim - 2
        fac_xi = np.exp(-xis * (grid.points[k] - grid.points[j]))
        fac_eta = np.exp(-etas * (grid.points[j] - grid.points[i]))
        fac_xi = fac_xi.reshape(xis.shape + (1,) * (extra + 1))
        fac_eta = fac_eta.reshape((1,) + etas.shape + (1,) * extra)
        return r.at(i, k) - fac_xi * r_us - fac_eta * r_tu

    def wrapped(i, j, k):
        if not i <= j <= k:
            raise ValueError("triple must be ordered i <= j <= k")
        return triple(i, j, k)

    return wrapped


def trace_pair(a: np.ndarray, b: np.ndarray) -> float:
    """Trace pairing A . B = Tr(A B*) = sum_ij A_ij B_ij for real matrices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("trace_pair needs matrices of identical shape")
    return float(np.sum(a * b))


def holder_norm2(f: Increment2, mu: float):
    """mu-Holder norm of a 1-increment over all ordered grid pairs.

    Returns (norm, (i, j)) where (i, j) is the attaining index pair.
    Degenerate pairs contribute 0 and are skipped.
    """
    if mu <= 0:
        raise ValueError("mu must be > 0")
    pts = f.grid.points
    best, arg = 0.0, (0, 0)
    n = len(f.grid)
    for i in range(n):
        for j in range(i + 1, n):
            val = np.linalg.norm(np.asarray(f.at(i, j), dtype=float).ravel())
            ratio = val / (pts[j] - pts[i]) ** mu
            if ratio > best:
                best, arg = ratio, (i, j)
    return best, arg


def holder_norm3(h: Increment3, gamma: float, rho: float) -> float:
    """Two-exponent Holder norm sup |h_tus| / ((u-s)^gamma (t-u)^rho).

    Triples with a zero gap are skipped (they contribute 0 by the vanishing
    convention).  This dominates the infimum-over-decompositions norm, so
    bound checks made with it are conservative.
    """
    if gamma <= 0 or rho <= 0:
        raise ValueError("gamma and rho must be > 0")
    pts = h.grid.points
    best = 0.0
    n = len(h.grid)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                val = np.linalg.norm(np.asarray(h.at(i, j, k), dtype=float).ravel())
                denom = (pts[j] - pts[i]) ** gamma * (pts[k] - pts[j]) ** rho
                best = max(best, val / denom)
    return best


def lbeta_norm(values_per_atom: np.ndarray, measure, beta: float) -> float:
    """Quadrature L_beta norm: sum_k |w_k| (1 + xi_k^beta) ||g(xi_k)||."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    vals = np.asarray(values_per_atom, dtype=float)
    if vals.shape[0] != measure.xis.size:
        raise ValueError("atom axis does not match the measure")
    norms = np.sqrt((vals.reshape(vals.shape[0], -1) ** 2).sum(axis=1))
    return float(np.sum(np.abs(measure.weights) * (1.0 + measure.xis**beta) * norms))


def estimate_holder_exponent(path: Increment1, max_lag_exp: int | None = None):
    """Empirical Holder exponent of a sampled path.

    Least-squares slope of log median|increment| against log lag over dyadic
    lags.  Returns (exponent, residual) where residual is the RMS misfit of
    the regression.  Raises on (near-)constant paths, whose exponent is
    undefined.
    """
    n = len(path.grid)
    if n < 32:
        raise ValueError("need at least 32 grid points")
    vals = path.values.reshape(n, -1)
    scale = np.max(np.abs(vals - vals[0]))
    if scale == 0.0:
        raise ValueError("constant path has no defined Holder exponent")
    # short lags only: long-lag medians are too noisy to help the fit
    j_max = min(int(np.log2(n - 1)) - 2, 5) if max_lag_exp is None else max_lag_exp
    j_max = max(j_max, 1)
    lags, meds = [], []
    pts = path.grid.points
    for j in range(j_max + 1):
        lag = 2**j
        if lag >= n:
            break
        diffs = np.linalg.norm(vals[lag:] - vals[:-lag], axis=1)
        med = float(np.median(diffs))
        if med <= 0.0:
            continue
        lags.append(float(np.median(pts[lag:] - pts[:-lag])))
        meds.append(med)
    if len(lags) < 3:
        raise ValueError("not enough usable lags to fit an exponent")
    x = np.log(np.asarray(lags))
    y = np.log(np.asarray(meds))
    coef = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((np.polyval(coef, x) - y) ** 2)))
    return float(coef[0]), resid
