"""Driver sampling and exact rough lifts of piecewise-linear paths.

Drivers (deterministic samples, Brownian motion, fractional Brownian
motion) are stored as piecewise-linear paths on a time grid.  For such
paths every exponentially weighted iterated integral has a closed form
per cell, so the first-order lift, the weighted Levy-area analogue and
the third-order Chen defect are computed exactly (to round-off) and
reassembled on arbitrary pairs through the twisted Chasles relation.

fBm is sampled exactly in law by dense Cholesky factorisation of the
covariance, capped at desk scale.  Sampling uses counter-based Philox
streams keyed by the seed, so a fixed seed reproduces paths bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .expkernels import e0, exp_int, ramp_int
from .laplace import KernelMeasure, project

__all__ = [
    "DriverPath",
    "RoughLift",
    "sample_fbm",
    "sample_brownian",
    "deterministic_driver",
    "fbm_covariance",
    "lift_ito_x2",
    "wiener_cov_x1",
    "driver_to_csv",
    "driver_from_csv",
    "MAX_CHOLESKY_POINTS",
]

MAX_CHOLESKY_POINTS = 2**12 + 1

ALL_HYPOTHESES = frozenset({"H1", "H2", "H3"})


def _rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator on a substream derived from (seed, *stream)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class DriverPath:
    """Piecewise-linear driver: values (n_points, n_dims) on a time grid."""

    grid: "TimeGrid"
    values: np.ndarray
    kind: str = "deterministic"
    hurst: float | None = None
    seed: int | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "values", vals)
        if vals.shape[0] != len(self.grid):
            raise ValueError("driver needs one value row per grid point")
        if not np.all(np.isfinite(vals)):
            raise ValueError("driver values must be finite")
        widths = self.grid.widths
        object.__setattr__(self, "_slopes", np.diff(vals, axis=0) / widths[:, None])

    @property
    def n_dims(self) -> int:
        return self.values.shape[1]

    @property
    def slopes(self) -> np.ndarray:
        """Per-cell slopes, shape (n_cells, n_dims)."""
        return self._slopes

    def at(self, times):
        """Piecewise-linear evaluation at arbitrary times in [0, T]."""
        times = np.asarray(times, dtype=float)
        pts = self.grid.points
        idx = np.clip(np.searchsorted(pts, times, side="right") - 1, 0, len(pts) - 2)
        return self.values[idx] + self._slopes[idx] * (times - pts[idx])[..., None]


def fbm_covariance(hurst: float, times: np.ndarray) -> np.ndarray:
    """Covariance matrix R_H(t, s) = (|s|^2H + |t|^2H - |t-s|^2H)/2."""
    t = np.asarray(times, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (
        np.abs(t[:, None]) ** h2
        + np.abs(t[None, :]) ** h2
        - np.abs(t[:, None] - t[None, :]) ** h2
    )


_chol_cache: dict = {}


def _fbm_cholesky(hurst: float, times: np.ndarray) -> np.ndarray:
    """Cholesky factor of the fBm covariance, cached across seeds."""
    key = (float(hurst), times.shape[0], hash(times.tobytes()))
    cached = _chol_cache.get(key)
    if cached is not None:
        return cached
    cov = fbm_covariance(hurst, times)
    chol = None
    for attempt in range(4):
        jitter = 0.0 if attempt == 0 else 1e-13 * float(np.max(np.diag(cov))) * 10**attempt
        try:
            chol = np.linalg.cholesky(
                cov + jitter * np.eye(cov.shape[0]) if jitter else cov
            )
            break
        except np.linalg.LinAlgError:
            continue
    if chol is None:
        raise np.linalg.LinAlgError("fBm covariance not factorisable even with jitter")
    if len(_chol_cache) > 8:
        _chol_cache.clear()
    _chol_cache[key] = chol
    return chol


def sample_fbm(hurst: float, grid, n_dims: int = 1, seed: int = 0) -> DriverPath:
    """Exact-in-law fBm sample on the grid via dense Cholesky.

    Components are independent; H = 0.5 reduces to Brownian motion.  A
    failed factorisation (round-off non-PSD) is retried with escalating
    diagonal jitter before giving up.  The factor is cached across seeds.
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError("Hurst parameter must be in (0, 1)")
    if len(grid) > MAX_CHOLESKY_POINTS:
        raise ValueError(
            f"grid has {len(grid)} points; Cholesky sampling is capped at "
            f"{MAX_CHOLESKY_POINTS}"
        )
    times = grid.points[1:]
    chol = _fbm_cholesky(hurst, times)
    gauss = _rng(seed).standard_normal((times.size, n_dims))
    vals = np.vstack([np.zeros((1, n_dims)), chol @ gauss])
    kind = "brownian" if hurst == 0.5 else "fbm"
    return DriverPath(grid, vals, kind=kind, hurst=hurst, seed=seed)


def sample_brownian(grid, n_dims: int = 1, seed: int = 0) -> DriverPath:
    return sample_fbm(0.5, grid, n_dims=n_dims, seed=seed)


def deterministic_driver(grid, fn) -> DriverPath:
    """Sample a deterministic function onto the grid (piecewise-linear)."""
    vals = np.asarray([fn(t) for t in grid.points], dtype=float)
    return DriverPath(grid, vals, kind="deterministic")


class RoughLift:
    """Rough-lift data of a piecewise-linear driver over a kernel measure.

    Stores the first-order lift per consecutive grid cell and atom, its
    kernel projection, and a lazy memo cache of second-order values keyed
    by grid-index pairs.  Arbitrary pairs are reconstructed through the
    twisted Chasles relation, which holds exactly by construction.  The
    memo cache tolerates concurrent insertion (writes are idempotent);
    everything else is read-only after construction.

    ``gamma`` is the regularity the lift claims for the driver;
    piecewise-linear lifts always carry the full hypothesis set H1 (first
    order, twisted-exact), H2 (projected first order) and H3 (second
    order with Chen defect).
    """

    def __init__(self, driver: DriverPath, measure: KernelMeasure, gamma: float,
                 claims=ALL_HYPOTHESES):
        if not 0.0 < gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        self.driver = driver
        self.measure = measure
        self.gamma = float(gamma)
        self.claims = frozenset(claims)

        widths = driver.grid.widths
        xis = measure.xis
        m = driver.slopes                                    # (C, n)
        cell_e0 = e0(xis[None, :], widths[:, None])          # (C, K)
        self._x1t_cells = cell_e0[:, :, None] * m[:, None, :]        # (C, K, n)
        self._decay_cells = np.exp(-xis[None, :] * widths[:, None])  # (C, K)
        self._x1_cells = project(self._x1t_cells, measure, axis=1)   # (C, n)
        n_pts = len(driver.grid)
        prefix = np.zeros((n_pts, xis.size, driver.n_dims))
        for c in range(n_pts - 1):
            prefix[c + 1] = (
                self._decay_cells[c][:, None] * prefix[c] + self._x1t_cells[c]
            )
        self._prefix = prefix                                # x1t from 0 to point i
        self._x2_cache: dict = {}

    @property
    def xis(self):
        return self.measure.xis

    @property
    def n_dims(self):
        return self.driver.n_dims

    def _locate(self, v):
        pts = self.driver.grid.points
        return np.clip(np.searchsorted(pts, v, side="right") - 1, 0, len(pts) - 2)

    def _validate_pair(self, s, t):
        T = self.driver.grid.horizon
        if not (0.0 <= s <= t <= T * (1 + 1e-12) + 1e-15):
            raise ValueError("need 0 <= s <= t <= horizon")

    def _overlaps(self, s, t):
        """Yield (cell, a, b) pieces of [s, t] clipped to driver cells."""
        pts = self.driver.grid.points
        c0 = int(self._locate(s))
        c1 = int(self._locate(t))
        for c in range(c0, c1 + 1):
            a = max(s, pts[c])
            b = min(t, pts[c + 1])
            if b > a:
                yield c, a, b

    # -- first order -------------------------------------------------------

    def x1_tilde(self, s: float, t: float, atom: int | None = None):
        """Exact weighted first-order integral over [s, t], shape (K, n).

        Assembled cell by cell, left to right with per-cell decay, so
        there is no cancellation against large prefixes.
        """
        self._validate_pair(s, t)
        xis = self.xis
        acc = np.zeros((xis.size, self.n_dims))
        if t > s:
            for c, a, b in self._overlaps(s, t):
                dt = b - a
                acc = (
                    np.exp(-xis * dt)[:, None] * acc
                    + e0(xis, dt)[:, None] * self.driver.slopes[c][None, :]
                )
        return acc if atom is None else acc[atom]

    def _prefix_at(self, v):
        """x1 tilde from 0 to each time in v, shape (len(v), K, n)."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        pts = self.driver.grid.points
        cells = self._locate(v)
        dt = v - pts[cells]
        part = e0(self.xis[None, :], dt[:, None])[:, :, None] * (
            self.driver.slopes[cells][:, None, :]
        )
        decay = np.exp(-self.xis[None, :] * dt[:, None])[:, :, None]
        return part + decay * self._prefix[cells]

    def x1_tilde_pairs(self, u, v):
        """Vectorised x1 tilde on pairs (u_i, v_i): shape (npairs, K, n).

        Uses prefix differences; exact up to an eps-level residual
        relative to the prefix scale.
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        decay = np.exp(-self.xis[None, :] * (v - u)[:, None])[:, :, None]
        return self._prefix_at(v) - decay * self._prefix_at(u)

    def x1(self, s: float, t: float):
        """Kernel-projected first-order increment over [s, t], shape (n,)."""
        return project(self.x1_tilde(s, t), self.measure, axis=0)

    def x1_pairs(self, u, v):
        return project(self.x1_tilde_pairs(u, v), self.measure, axis=1)

    # -- second order --------------------------------------------------

    def _x2_walk(self, s: float, t: float):
        # one vectorised pass over the cells of [s, t]: each cell contributes
        # a closed-form term (ramp part plus cross term against the running
        # x1 tilde from s), decayed from the cell end to t; the left-to-right
        # recursion unrolls exactly into these weighted sums
        xis = self.xis
        ws = self.measure.weights
        n = self.n_dims
        pieces = list(self._overlaps(s, t))
        if not pieces:
            return np.zeros((xis.size, n, n))
        cells = np.array([p[0] for p in pieces])
        a = np.array([p[1] for p in pieces])
        b = np.array([p[2] for p in pieces])
        dt = b - a
        m = self.driver.slopes[cells]                              # (C, n)
        run = self.x1_tilde_pairs(np.full(a.shape, s), a)          # (C, K, n)
        ramp = ramp_int(xis[None, :, None], xis[None, None, :], dt[:, None, None])
        cross = exp_int(xis[None, :, None], xis[None, None, :], dt[:, None, None])
        terms = (ramp @ ws)[:, :, None, None] * np.einsum("cj,cd->cjd", m, m)[:, None]
        terms += np.einsum("cok,k,cj,ckd->cojd", cross, ws, m, run)
        w_end = np.exp(-np.multiply.outer(t - b, xis))             # (C, K)
        return np.einsum("co,cojd->ojd", w_end, terms)

    def x2_tilde(self, s: float, t: float, atom: int | None = None):
        """Weighted Levy-area analogue over [s, t], shape (K, n, n).

        int_s^t e^{-xi(t-v)} dx_v (x) x1_{vs}, per output atom xi.
        Grid-aligned pairs are memoised under their index pair.
        """
        self._validate_pair(s, t)
        pts = self.driver.grid.points
        i = int(np.searchsorted(pts, s))
        j = int(np.searchsorted(pts, t))
        key = None
        if i < len(pts) and j < len(pts) and pts[i] == s and pts[j] == t:
            key = (i, j)
            cached = self._x2_cache.get(key)
            if cached is not None:
                return cached if atom is None else cached[atom]
        val = self._x2_walk(s, t)
        if key is not None:
            self._x2_cache[key] = val
        return val if atom is None else val[atom]

    def x2_tilde_pairs(self, u, v):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        return np.stack([self.x2_tilde(a, b) for a, b in zip(u, v)])

    def x3_tilde(self, s: float, u: float, t: float, atom: int | None = None):
        """Chen defect on the ordered triple s <= u <= t, shape (K, n, n).

        (delta~ x2)_{tus} - x1~_{tu} (x) x1_{us}; x2 comes from the direct
        construction, so there is no circularity.
        """
        if not s <= u <= t:
            raise ValueError("need s <= u <= t")
        d_x2 = (
            self.x2_tilde(s, t)
            - self.x2_tilde(u, t)
            - np.exp(-self.xis * (t - u))[:, None, None] * self.x2_tilde(s, u)
        )
        outer = np.einsum("kj,d->kjd", self.x1_tilde(u, t), self.x1(s, u))
        val = d_x2 - outer
        return val if atom is None else val[atom]

    # -- solver support --------------------------------------------------

    def cell_tables(self, refine: int = 1):
        """Closed-form lift data for every grid cell at uniform sub-refinement.

        All ``refine`` equal sub-cells of one cell share the same slope and
        width, hence the same closed forms; tables therefore stay per-cell:
        returns (x1t, x2t, decay, sub_widths) with shapes
        (C, K, n), (C, K, n, n), (C, K), (C,).
        """
        if refine < 1:
            raise ValueError("refine must be >= 1")
        widths = self.driver.grid.widths / refine
        xis = self.xis
        ws = self.measure.weights
        m = self.driver.slopes
        x1t = e0(xis[None, :], widths[:, None])[:, :, None] * m[:, None, :]
        ramp = ramp_int(
            xis[None, :, None], xis[None, None, :], widths[:, None, None]
        )                                                    # (C, Kout, Kin)
        mm = np.einsum("cj,cd->cjd", m, m)
        x2t = (ramp @ ws)[:, :, None, None] * mm[:, None, :, :]
        decay = np.exp(-xis[None, :] * widths[:, None])
        return x1t, x2t, decay, widths

    # -- diagnostics -------------------------------------------------------

    @property
    def scale(self) -> float:
        """Reference magnitude of the first-order lift (for scaled residuals)."""
        return max(float(np.max(np.abs(self._prefix))), 1e-300)

    def chasles_residual(self, n_triples: int = 200, seed: int = 0) -> float:
        """Max twisted-Chasles residual over random grid triples, scaled."""
        rng = np.random.default_rng(seed)
        n = len(self.driver.grid)
        pts = self.driver.grid.points
        worst = 0.0
        for _ in range(n_triples):
            i, j, k = sorted(int(x) for x in rng.integers(0, n, size=3))
            res = (
                self.x1_tilde(pts[i], pts[k])
                - self.x1_tilde(pts[j], pts[k])
                - np.exp(-self.xis * (pts[k] - pts[j]))[:, None]
                * self.x1_tilde(pts[i], pts[j])
            )
            worst = max(worst, float(np.max(np.abs(res))) / self.scale)
        return worst


def lift_ito_x2(
    driver: DriverPath,
    measure: KernelMeasure,
    s: float,
    t: float,
    refinement: int = 64,
    atom: int | None = None,
):
    """Left-endpoint Ito approximation of the second-order Brownian lift.

    The driver is refined by dyadic Brownian-bridge interpolation (noise
    streams keyed off the driver seed and the refinement level, so
    refinements nest: R = 64 and R = 128 share their common levels) and
    the weighted double integral is taken as an Ito left-point Riemann
    sum on the refined path.  Converges in mean square as R grows.
    """
    if driver.kind != "brownian":
        raise ValueError("Ito lift is defined for Brownian drivers only")
    if refinement < 1 or refinement & (refinement - 1):
        raise ValueError("refinement must be a power of two")
    pts = driver.grid.points
    i = driver.grid.index_of(s)
    j = driver.grid.index_of(t)
    if j <= i:
        raise ValueError("need grid points s < t")

    times = pts.copy()
    vals = driver.values.copy()
    level = 0
    while (times.size - 1) < (len(pts) - 1) * refinement:
        level += 1
        mids = 0.5 * (times[:-1] + times[1:])
        widths = np.diff(times)
        gen = _rng(driver.seed or 0, 1, level)
        noise = gen.standard_normal((mids.size, driver.n_dims))
        midvals = 0.5 * (vals[:-1] + vals[1:]) + 0.5 * np.sqrt(widths)[:, None] * noise
        times = np.insert(times, np.arange(1, times.size), mids)
        vals = np.insert(vals, np.arange(1, vals.shape[0]), midvals, axis=0)

    lo, hi = i * refinement, j * refinement
    seg_t = times[lo : hi + 1]
    dx = np.diff(vals[lo : hi + 1], axis=0)
    xis = measure.xis
    x1_run = np.zeros((xis.size, driver.n_dims))
    x2 = np.zeros((xis.size, driver.n_dims, driver.n_dims))
    for k in range(dx.shape[0]):
        dt = seg_t[k + 1] - seg_t[k]
        w_out = np.exp(-xis * (t - seg_t[k]))
        x1_proj = measure.weights @ x1_run
        x2 += np.einsum("K,j,d->Kjd", w_out, dx[k], x1_proj)
        x1_run = np.exp(-xis * dt)[:, None] * (x1_run + dx[k][None, :])
    return x2 if atom is None else x2[atom]


def wiener_cov_x1(hurst, xi, eta, interval_a, interval_b):
    """Covariance of two weighted Wiener integrals of fBm with H > 1/2.

    c_H int_{[s,t]x[u,v]} e^{-xi(t-a)} e^{-eta(v-b)} |a-b|^{2H-2} da db,
    c_H = H(2H-1), by nested adaptive quadrature.  The integrable
    |a-b|^{2H-2} singularity is handled with algebraic endpoint weights;
    the outer integral is split at the inner interval's endpoints.
    """
    if not hurst > 0.5:
        raise ValueError("covariance formula requires H > 1/2")
    if xi < 0 or eta < 0:
        raise ValueError("Laplace frequencies must be >= 0")
    s, t = map(float, interval_a)
    u, v = map(float, interval_b)
    if not (s < t and u < v):
        raise ValueError("intervals must be nondegenerate and ordered")
    c_h = hurst * (2.0 * hurst - 1.0)
    expo = 2.0 * hurst - 2.0

    def inner(a):
        if a <= u:
            if a == u:
                return quad(lambda b: np.exp(-eta * (v - b)), u, v,
                            weight="alg", wvar=(expo, 0.0))[0]
            return quad(lambda b: np.exp(-eta * (v - b)) * (b - a) ** expo,
                        u, v, limit=200)[0]
        if a >= v:
            if a == v:
                return quad(lambda b: np.exp(-eta * (v - b)), u, v,
                            weight="alg", wvar=(0.0, expo))[0]
            return quad(lambda b: np.exp(-eta * (v - b)) * (a - b) ** expo,
                        u, v, limit=200)[0]
        left = quad(lambda b: np.exp(-eta * (v - b)), u, a,
                    weight="alg", wvar=(0.0, expo))[0]
        right = quad(lambda b: np.exp(-eta * (v - b)), a, v,
                     weight="alg", wvar=(expo, 0.0))[0]
        return left + right

    breaks = sorted({s, t} | {x for x in (u, v) if s < x < t})
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        val, _ = quad(
            lambda a: np.exp(-xi * (t - a)) * inner(a), lo, hi,
            limit=200, epsabs=1e-12, epsrel=1e-10,
        )
        total += val
    return c_h * total


def driver_to_csv(driver: DriverPath, path):
    """Write a driver as `t,x1,...,xn` rows with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i+1}" for i in range(driver.n_dims)])
        for t, row in zip(driver.grid.points, driver.values):
            writer.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in row])


def driver_from_csv(path, kind="deterministic", hurst=None, seed=None) -> DriverPath:
    from .algebra import TimeGrid

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError("driver CSV must start with a 't' column")
        rows = [[float(x) for x in row] for row in reader if row]
    arr = np.asarray(rows, dtype=float)
    return DriverPath(
        TimeGrid(arr[:, 0]), arr[:, 1:], kind=kind, hurst=hurst, seed=seed
    )
