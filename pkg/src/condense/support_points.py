"""Point sets minimizing the empirical energy distance to a data sample.

The solver is a majorize-minimize fixed point: the pairwise (concave) term of
the energy objective is linearized at the current iterate and the data
(convex) term is majorized by a quadratic, which yields a closed-form Jacobi
update per point. The objective never increases across steps, up to the
epsilon floor on distances.

A 1D solver (quantile-initialized, used inside every partition cell) and a
d-dimensional solver (random-subsample-initialized, used for Voronoi centers
and the joint-cloud baseline) share the same step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError
from .metrics import _mean_abs_diff_1d, _mean_self_abs_diff_1d, mean_pairwise_distance

_EPS_SCALE = 1e-10  # distance floor as a fraction of the data range


@dataclass(frozen=True)
class SpConfig:
    max_iters: int = 500
    tol: float = 1e-8           # relative objective change
    epsilon: float | None = None  # distance floor; default 1e-10 * data range
    seed: int = 0
    init: str = "quantile"      # "quantile" (1D) or "random_subsample" (nD)

    def __post_init__(self):
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if self.tol <= 0:
            raise DomainError("tol must be positive")
        if self.epsilon is not None and self.epsilon <= 0:
            raise DomainError("epsilon must be positive")


@dataclass
class SpResult:
    points: np.ndarray
    objective: float
    iters_used: int
    converged: bool
    warnings: list[str] = field(default_factory=list)


def _resolve_eps(cfg: SpConfig, data: np.ndarray) -> float:
    if cfg.epsilon is not None:
        return cfg.epsilon
    span = float(np.max(data) - np.min(data))
    return _EPS_SCALE * span if span > 0 else _EPS_SCALE


def empirical_energy_objective(candidate, data) -> float:
    """2/(nN) sum ||z_j - y_m|| - 1/n^2 sum ||z_i - z_j||."""
    z = np.asarray(candidate, dtype=float)
    y = np.asarray(data, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if z.shape[0] == 0 or y.shape[0] == 0:
        raise DomainError("empty point set")
    if z.shape[1] != y.shape[1]:
        raise DomainError(f"dimension mismatch: {z.shape[1]} vs {y.shape[1]}")
    if z.shape[1] == 1:
        zv, yv = z[:, 0], y[:, 0]
        return 2.0 * _mean_abs_diff_1d(zv, yv) - _mean_self_abs_diff_1d(zv)
    return 2.0 * mean_pairwise_distance(z, y) - mean_pairwise_distance(z, z)


def sp_fixed_point_step(current: np.ndarray, data: np.ndarray, eps: float) -> np.ndarray:
    """One Jacobi MM step; all updates use the pre-step positions.

    x_i <- [ (N/n) sum_{j!=i} (x_i-x_j)/max(d_ij,eps) + sum_m y_m/max(d_im,eps) ]
           / sum_m 1/max(d_im,eps)
    """
    z = np.atleast_2d(np.asarray(current, dtype=float))
    y = np.atleast_2d(np.asarray(data, dtype=float))
    if z.shape[1] != y.shape[1]:
        raise DomainError("dimension mismatch between candidate and data")
    n, N = z.shape[0], y.shape[0]

    # self term: sum over j != i of the unit vector from x_j to x_i
    d_zz = np.maximum(cdist(z, z), eps)
    np.fill_diagonal(d_zz, 1.0)  # diagonal differences are zero anyway
    inv_zz = 1.0 / d_zz
    np.fill_diagonal(inv_zz, 0.0)
    self_term = inv_zz.sum(axis=1)[:, None] * z - inv_zz @ z

    # data term, chunked over data rows with fixed block size
    num = np.zeros_like(z)
    den = np.zeros(n)
    block = max(1, (1 << 22) // max(n, 1))
    for start in range(0, N, block):
        yb = y[start:start + block]
        inv = 1.0 / np.maximum(cdist(z, yb), eps)
        num += inv @ yb
        den += inv.sum(axis=1)

    return ((N / n) * self_term + num) / den[:, None]


def _quantile_init(sorted_data: np.ndarray, n: int) -> np.ndarray:
    # empirical quantiles at levels (2i-1)/(2n); ties to the lower order statistic
    N = sorted_data.size
    levels = (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)
    idx = np.maximum(np.ceil(levels * N).astype(int) - 1, 0)
    return sorted_data[idx]


_JITTER = 1e-4  # initialization offset, as a fraction of the per-dim span;
                # keeps start points off exact data rows, where the epsilon
                # floor would make the first fixed-point steps vanishingly small


def _iterate(z0: np.ndarray, data: np.ndarray, cfg: SpConfig, eps: float) -> tuple[np.ndarray, float, int, bool]:
    z = z0
    obj = empirical_energy_objective(z, data)
    converged = False
    it = 0
    small_streak = 0
    for it in range(1, cfg.max_iters + 1):
        z_new = sp_fixed_point_step(z, data, eps)
        obj_new = empirical_energy_objective(z_new, data)
        z, prev, obj = z_new, obj, obj_new
        # two consecutive sub-tol changes: a single tiny step right after a
        # near-coincident start must not count as convergence
        small_streak = small_streak + 1 if abs(prev - obj) <= cfg.tol * max(1.0, abs(prev)) else 0
        if small_streak >= 2:
            converged = True
            break
    return z, obj, it, converged


def support_points_1d(data, n: int, cfg: SpConfig = SpConfig()) -> SpResult:
    """n points minimizing the 1D empirical energy objective, sorted ascending.

    Initialized at the empirical quantiles (2i-1)/(2n), which are already
    near-stationary, so the fixed point usually converges in a few sweeps.
    """
    y = np.asarray(data, dtype=float).ravel()
    if y.size == 0:
        raise DomainError("empty data")
    if n < 1:
        raise DomainError("n must be >= 1")
    if not np.all(np.isfinite(y)):
        raise DomainError("non-finite data")
    warnings = []
    if n > 10 * y.size:
        warnings.append(f"requested n={n} exceeds 10x the data size {y.size}")

    y_sorted = np.sort(y)
    if y_sorted[0] == y_sorted[-1]:
        pts = np.full(n, y_sorted[0])
        return SpResult(points=pts, objective=0.0, iters_used=0, converged=True,
                        warnings=warnings)

    eps = _resolve_eps(cfg, y_sorted)
    z0 = _quantile_init(y_sorted, n)
    span = y_sorted[-1] - y_sorted[0]
    rng = np.random.default_rng(cfg.seed)
    start = z0 + _JITTER * span * rng.uniform(-1.0, 1.0, size=n)
    z, obj, iters, converged = _iterate(start[:, None], y_sorted[:, None], cfg, eps)
    # never return worse than the plain quantile initialization
    init_obj = empirical_energy_objective(z0, y_sorted)
    if obj > init_obj:
        return SpResult(points=z0.copy(), objective=init_obj, iters_used=iters,
                        converged=converged, warnings=warnings)
    return SpResult(points=np.sort(z[:, 0]), objective=obj, iters_used=iters,
                    converged=converged, warnings=warnings)


def support_points_nd(data, n: int, cfg: SpConfig = SpConfig(init="random_subsample")) -> SpResult:
    """n points in R^p minimizing the empirical energy objective."""
    y = np.atleast_2d(np.asarray(data, dtype=float))
    if y.shape[0] < 2:
        raise DomainError("need at least two data points")
    if n < 1:
        raise DomainError("n must be >= 1")
    if not np.all(np.isfinite(y)):
        raise DomainError("non-finite data")
    warnings = []
    if n > 10 * y.shape[0]:
        warnings.append(f"requested n={n} exceeds 10x the data size {y.shape[0]}")

    if np.all(y == y[0]):
        pts = np.repeat(y[:1], n, axis=0)
        return SpResult(points=pts, objective=0.0, iters_used=0, converged=True,
                        warnings=warnings)

    # canonical row order: results do not depend on the input permutation
    y = y[np.lexsort(y.T[::-1])]

    rng = np.random.default_rng(cfg.seed)
    if cfg.init == "quantile" and y.shape[1] == 1:
        z0 = _quantile_init(y[:, 0], n)[:, None]
    else:
        replace = n > y.shape[0]
        if replace:
            warnings.append("sampling the initialization with replacement (n > N)")
        idx = rng.choice(y.shape[0], size=n, replace=replace)
        z0 = y[idx].copy()
    span = np.ptp(y, axis=0)
    z0 = z0 + _JITTER * span[None, :] * rng.uniform(-1.0, 1.0, size=z0.shape)

    eps = _resolve_eps(cfg, y)
    z, obj, iters, converged = _iterate(z0, y, cfg, eps)
    return SpResult(points=z, objective=obj, iters_used=iters, converged=converged,
                    warnings=warnings)
