"""Seeded generators for the benchmark simulation cases, with exact truth.

Bivariate cases:
  case1  X1 ~ Beta(2,5), X2 ~ Beta(5,2);        Y|X ~ Beta(X1, X2)
  case2  X ~ N(0, 5 I2);                        Y|X ~ Exp(rate = ||x||)
  case3  X ~ U(0,1)^2;                          Y|X ~ (1-X1) N(X1, X1^2) + X1 N(X2, X2^2)

Trivariate cases:
  case4  X1,X2,X3 ~ Beta(2,5), Beta(5,2), Beta(2,2);  Y|X ~ Beta(X1+X3, X2+X3)
  case5  X ~ N(0, 5 I3);                        Y|X ~ Exp(rate = ||x||)
  case6  X ~ U(0,1)^3; W ~ Dirichlet(X);        Y|X,W ~ sum_q W_q N(X_q, X_q^2)

Six-dimensional extensions mirror the trivariate constructions (case1_6d,
case2_6d, case3_6d). Two toys: `banana` (X ~ N(0,1) truncated to [-3,3],
Y|X ~ N(X^2 - 1, 0.5^2)) and `cond_beta` (X ~ U(0,1), Y|X ~ Beta(X, X^2+10)).

Beta shape parameters are floored at 1e-3 to keep the sampler and the truth
density stable near zero. Each TruthOracle exposes the exact conditional CDF
and density used for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import Dataset
from .errors import DomainError
from .metrics import crps_grid_batch

SHAPE_FLOOR = 1e-3

CASE_IDS = ("case1", "case2", "case3", "case4", "case5", "case6",
            "case1_6d", "case2_6d", "case3_6d", "banana", "cond_beta")


@dataclass(frozen=True)
class CaseSpec:
    case_id: str
    N: int
    seed: int = 0

    def __post_init__(self):
        if self.case_id not in CASE_IDS:
            raise DomainError(f"unknown case id {self.case_id!r}")
        if self.N < 1:
            raise DomainError("N must be >= 1")


@dataclass
class TruthOracle:
    """Exact conditional CDF/density callables: fn(x, y_values) -> array."""

    cond_cdf: object
    cond_density: object
    bounded_01: bool  # response support inside [0, 1]

    def cdf_family(self, domain):
        def family(x):
            from .metrics import FunctionCdf
            return FunctionCdf(fn=lambda z: self.cond_cdf(x, z), domain=domain)
        return family

    def density_family(self):
        return lambda x: (lambda z: self.cond_density(x, z))


def _beta_truth(shape_a, shape_b):
    def cdf(x, y):
        a, b = shape_a(np.asarray(x, dtype=float)), shape_b(np.asarray(x, dtype=float))
        return stats.beta.cdf(np.asarray(y, dtype=float), a, b)

    def pdf(x, y):
        a, b = shape_a(np.asarray(x, dtype=float)), shape_b(np.asarray(x, dtype=float))
        return stats.beta.pdf(np.asarray(y, dtype=float), a, b)

    return TruthOracle(cond_cdf=cdf, cond_density=pdf, bounded_01=True)


def _expon_truth(dim):
    def rate(x):
        return float(np.linalg.norm(np.asarray(x, dtype=float)[:dim]))

    def cdf(x, y):
        return stats.expon.cdf(np.asarray(y, dtype=float), scale=1.0 / rate(x))

    def pdf(x, y):
        return stats.expon.pdf(np.asarray(y, dtype=float), scale=1.0 / rate(x))

    return TruthOracle(cond_cdf=cdf, cond_density=pdf, bounded_01=False)


def _mixture_truth(weight_fn, dim):
    # components N(x_q, x_q^2); weight_fn(x) -> mixture weights
    def cdf(x, y):
        x = np.asarray(x, dtype=float)[:dim]
        w = weight_fn(x)
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y, dtype=float)
        for q in range(dim):
            out += w[q] * stats.norm.cdf(y, loc=x[q], scale=max(abs(x[q]), 1e-12))
        return out

    def pdf(x, y):
        x = np.asarray(x, dtype=float)[:dim]
        w = weight_fn(x)
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y, dtype=float)
        for q in range(dim):
            out += w[q] * stats.norm.pdf(y, loc=x[q], scale=max(abs(x[q]), 1e-12))
        return out

    return TruthOracle(cond_cdf=cdf, cond_density=pdf, bounded_01=False)


def _case3_weights(x):
    return np.array([1.0 - x[0], x[0]])


def _dirichlet_mean_weights(x):
    # W ~ Dirichlet(x) marginalizes to E[W_q] = x_q / sum(x)
    x = np.maximum(x, SHAPE_FLOOR)
    return x / x.sum()


def generate(spec: CaseSpec) -> tuple[Dataset, TruthOracle]:
    """Sample a dataset per the case definition; deterministic under the seed."""
    rng = np.random.default_rng(spec.seed)
    N = spec.N
    cid = spec.case_id

    if cid in ("case1", "case4", "case1_6d"):
        if cid == "case1":
            X = np.column_stack([rng.beta(2, 5, N), rng.beta(5, 2, N)])
            a_fn = lambda x: np.maximum(x[..., 0], SHAPE_FLOOR)
            b_fn = lambda x: np.maximum(x[..., 1], SHAPE_FLOOR)
        elif cid == "case4":
            X = np.column_stack([rng.beta(2, 5, N), rng.beta(5, 2, N), rng.beta(2, 2, N)])
            a_fn = lambda x: np.maximum(x[..., 0] + x[..., 2], SHAPE_FLOOR)
            b_fn = lambda x: np.maximum(x[..., 1] + x[..., 2], SHAPE_FLOOR)
        else:
            cols = [rng.beta(a, b, N) for a, b in
                    [(2, 5), (5, 2), (2, 2), (2, 5), (5, 2), (2, 2)]]
            X = np.column_stack(cols)
            a_fn = lambda x: np.maximum(x[..., 0] + x[..., 2] + x[..., 4], SHAPE_FLOOR)
            b_fn = lambda x: np.maximum(x[..., 1] + x[..., 3] + x[..., 5], SHAPE_FLOOR)
        y = rng.beta(a_fn(X), b_fn(X))
        oracle = _beta_truth(lambda x: a_fn(np.atleast_1d(x)),
                             lambda x: b_fn(np.atleast_1d(x)))

    elif cid in ("case2", "case5", "case2_6d"):
        d = {"case2": 2, "case5": 3, "case2_6d": 6}[cid]
        X = rng.normal(0.0, np.sqrt(5.0), size=(N, d))
        rates = np.linalg.norm(X, axis=1)
        y = rng.exponential(scale=1.0 / rates)
        oracle = _expon_truth(d)

    elif cid in ("case3", "case6", "case3_6d"):
        if cid == "case3":
            X = rng.uniform(size=(N, 2))
            comp = (rng.uniform(size=N) < X[:, 0]).astype(int)  # P(comp=1) = X1
            weight_fn = _case3_weights
            d = 2
        else:
            d = 3 if cid == "case6" else 6
            X = rng.uniform(size=(N, d))
            alphas = np.maximum(X, SHAPE_FLOOR)
            # per-row Dirichlet draw via normalized gammas; tiny shapes can
            # underflow every component to zero, fall back to the largest alpha
            g = rng.gamma(shape=alphas)
            dead = g.sum(axis=1) == 0.0
            if dead.any():
                g[dead, np.argmax(alphas[dead], axis=1)] = 1.0
            w = g / g.sum(axis=1, keepdims=True)
            u = rng.uniform(size=N)
            comp = (np.cumsum(w, axis=1) < u[:, None]).sum(axis=1)
            comp = np.minimum(comp, d - 1)
            weight_fn = _dirichlet_mean_weights
        locs = X[np.arange(N), comp]
        y = rng.normal(loc=locs, scale=np.abs(locs))
        oracle = _mixture_truth(weight_fn, d)

    elif cid == "banana":
        X = rng.normal(size=N)
        # truncate to [-3, 3] by redrawing out-of-range values
        bad = np.abs(X) > 3
        while bad.any():
            X[bad] = rng.normal(size=int(bad.sum()))
            bad = np.abs(X) > 3
        y = rng.normal(loc=X ** 2 - 1.0, scale=0.5)
        X = X[:, None]

        def cdf(x, yv):
            mu = float(np.atleast_1d(x)[0]) ** 2 - 1.0
            return stats.norm.cdf(np.asarray(yv, dtype=float), loc=mu, scale=0.5)

        def pdf(x, yv):
            mu = float(np.atleast_1d(x)[0]) ** 2 - 1.0
            return stats.norm.pdf(np.asarray(yv, dtype=float), loc=mu, scale=0.5)

        oracle = TruthOracle(cond_cdf=cdf, cond_density=pdf, bounded_01=False)

    else:  # cond_beta
        X = rng.uniform(size=(N, 1))
        a = np.maximum(X[:, 0], SHAPE_FLOOR)
        b = X[:, 0] ** 2 + 10.0
        y = rng.beta(a, b)
        oracle = _beta_truth(
            lambda x: np.maximum(np.asarray(x)[..., 0], SHAPE_FLOOR),
            lambda x: np.asarray(x)[..., 0] ** 2 + 10.0)

    x_names = [f"x{q + 1}" for q in range(X.shape[1] if X.ndim > 1 else 1)]
    return Dataset(X, y, x_names, "y"), oracle


def train_test_split(dataset: Dataset, test_frac: float = 0.05,
                     seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded random split; the default keeps 95% for training."""
    if not 0.0 < test_frac < 1.0:
        raise DomainError("test_frac must be in (0, 1)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n_rows)
    n_test = max(1, int(round(test_frac * dataset.n_rows)))
    return dataset.subset(perm[n_test:]), dataset.subset(perm[:n_test])


def truth_crps(oracle: TruthOracle, X, y, grid_size: int = 1024,
               domain: tuple[float, float] | None = None) -> float:
    """Mean CRPS of the exact truth CDF on a test set (the irreducible part)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if domain is None:
        from .metrics import response_domain
        domain = response_domain(y)
    from .metrics import mixed_eval_grid
    grid = mixed_eval_grid(domain[0], domain[1], y, grid_size)
    F = np.array([oracle.cond_cdf(X[i], grid) for i in range(X.shape[0])])
    return float(np.mean(crps_grid_batch(F, grid, y)))
