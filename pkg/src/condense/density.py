"""Conditional density estimation on a reduced dataset.

The log-density surface eta(x, y) is a finite tensor-product cubic-spline
dictionary: a main effect in the response direction plus, for each configured
covariate term, a tensor of covariate splines with response splines. Every
feature is centered so its quadrature average over the response interval is
zero at every x, which pins down the logistic transform

    f(y | x) = exp(eta(x, y)) / int exp(eta(x, y)) dy.

Two fitting criteria are provided: the penalized likelihood

    -(1/n) sum_i { eta(x_i, y_i) - log int exp(eta(x_i, y)) dy } + (lam/2) J(eta)

and the penalized pseudo-likelihood

    (1/n) sum_i { exp(-eta(x_i, y_i)) + int eta(x_i, y) rho(x_i, y) dy } + (lam/2) J(eta)

with J(eta) a quadratic roughness penalty: integrated squared second
derivative in y for the main effect, and the tensor-sum roughness (roughness
in one direction times L2 mass in the others) for interaction terms.

Responses are normalized to [0, 1] before fitting; fitted models map results
back to raw units.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline
from scipy.optimize import minimize

from .errors import DomainError, NumericalError
from .metrics import (composite_gl_rule, crps_grid_batch, gauss_legendre_rule,
                      mixed_eval_grid, response_domain)

SPLINE_ORDER = 3  # cubic
DEFAULT_QUAD_SIZE = 64
DEFAULT_LAMBDA_GRID = tuple(np.logspace(-6.0, 1.0, 8))
_CDF_GRID = 2049


def response_quadrature(knot_positions, total_nodes: int = DEFAULT_QUAD_SIZE):
    """Per-knot-span Gauss-Legendre panels totalling about `total_nodes`.

    Knots sit at response quantiles, so the panels track the data mass; a
    single global rule badly underresolves sharply skewed responses.
    """
    positions = np.asarray(knot_positions, dtype=float)
    per_span = max(4, int(np.ceil(total_nodes / (positions.size - 1))))
    return composite_gl_rule(positions, per_span)


class ClampWarning(UserWarning):
    """A query covariate fell outside the fitted range and was clamped."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasisConfig:
    y_knots: int = 12
    x_knots_per_dim: int = 6
    included_terms: tuple[tuple[int, ...], ...] | None = None  # default: one (q,) per dim
    spline_order: int = SPLINE_ORDER
    x_knot_style: str = "quantile"  # "quantile" | "uniform"

    def __post_init__(self):
        if self.y_knots < 4:
            raise DomainError("y_knots must be >= 4")
        if self.x_knots_per_dim < 3:
            raise DomainError("x_knots_per_dim must be >= 3")
        if self.spline_order != SPLINE_ORDER:
            raise DomainError("only cubic splines are supported")
        if self.x_knot_style not in ("quantile", "uniform"):
            raise DomainError(f"unknown x_knot_style {self.x_knot_style!r}")

    def terms_for(self, dim: int) -> tuple[tuple[int, ...], ...]:
        if self.included_terms is None:
            return tuple((q,) for q in range(dim))
        for term in self.included_terms:
            for q in term:
                if not 0 <= q < dim:
                    raise DomainError(f"term {term} references dimension {q} out of range")
            if len(set(term)) != len(term):
                raise DomainError(f"term {term} repeats a dimension")
        return tuple(tuple(t) for t in self.included_terms)


# ---------------------------------------------------------------------------
# 1D spline dictionary: clamped cubic B-splines, quadrature-centered
# ---------------------------------------------------------------------------

def _knot_positions(samples, m: int, lo: float, hi: float) -> np.ndarray:
    """m positions spanning [lo, hi] at equal quantiles of the sample."""
    if not hi > lo:
        raise DomainError(f"degenerate range [{lo}, {hi}]")
    interior = np.quantile(np.asarray(samples, dtype=float), np.linspace(0, 1, m)[1:-1])
    interior = np.unique(interior[(interior > lo) & (interior < hi)])
    pos = np.concatenate(([lo], interior, [hi]))
    if pos.size < 4:
        pos = np.linspace(lo, hi, max(4, m))
    return pos


@dataclass
class _Spline1D:
    positions: np.ndarray  # distinct knot positions, endpoints included

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        self.positions = p
        self.knots = np.concatenate((np.repeat(p[0], SPLINE_ORDER), p,
                                     np.repeat(p[-1], SPLINE_ORDER)))
        self.n_basis = p.size + 2
        self._bspl = BSpline(self.knots, np.eye(self.n_basis), SPLINE_ORDER,
                             extrapolate=False)

    def design(self, x, deriv: int = 0) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), self.positions[0], self.positions[-1])
        spl = self._bspl if deriv == 0 else self._bspl.derivative(deriv)
        out = spl(x)
        return np.nan_to_num(out, nan=0.0)

    def grams(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(value Gram, 2nd-derivative Gram, quadrature means) over the span.

        Per-knot-span 4-node Gauss rules integrate the piecewise-polynomial
        products exactly.
        """
        nodes, wts = [], []
        for a, b in zip(self.positions[:-1], self.positions[1:]):
            rule = gauss_legendre_rule(a, b, 4)
            nodes.append(rule.nodes)
            wts.append(rule.weights)
        nodes = np.concatenate(nodes)
        wts = np.concatenate(wts)
        D0 = self.design(nodes)
        D2 = self.design(nodes, deriv=2)
        length = self.positions[-1] - self.positions[0]
        means = (wts @ D0) / length
        g0 = D0.T @ (wts[:, None] * D0)
        g2 = D2.T @ (wts[:, None] * D2)
        return g0, g2, means


# ---------------------------------------------------------------------------
# tensor basis
# ---------------------------------------------------------------------------

@dataclass
class TensorBasis:
    """The built feature dictionary: evaluators, block layout and penalty.

    The y-direction centering constants default to exact (per-span) means but
    are normally supplied from the criterion's quadrature rule, so that the
    quadrature average of every feature is zero to machine precision.
    """

    cfg: BasisConfig
    dim: int
    y_spline: _Spline1D
    x_splines: list[_Spline1D]
    terms: tuple[tuple[int, ...], ...]
    y_center: np.ndarray | None = None
    x_centers: list[np.ndarray] = field(init=False)
    blocks: list[tuple] = field(init=False)       # (label, slice, shape)
    feature_count: int = field(init=False)
    penalty: np.ndarray = field(init=False)

    def __post_init__(self):
        gy0, gy2, my_exact = self.y_spline.grams()
        if self.y_center is None:
            self.y_center = my_exact
        self.x_centers = []
        x_grams = []
        for spl in self.x_splines:
            g0, g2, mx = spl.grams()
            self.x_centers.append(mx)
            x_grams.append((g0, g2))

        fy = self.y_spline.n_basis - 1
        length_y = self.y_spline.positions[-1] - self.y_spline.positions[0]
        Cy0 = _centered_gram(gy0, self.y_center, length_y, my_exact)[:fy, :fy]
        Cy2 = gy2[:fy, :fy]

        blocks = [("y", slice(0, fy), (fy,))]
        pen_blocks = [Cy2]
        offset = fy
        for term in self.terms:
            fxs = [self.x_splines[q].n_basis - 1 for q in term]
            size = int(np.prod(fxs)) * fy
            shape = (*fxs, fy)
            blocks.append((term, slice(offset, offset + size), shape))
            offset += size
            # roughness in each direction times L2 mass in the others
            mats_val, mats_rough = [], []
            for q in term:
                g0, g2 = x_grams[q]
                fx = self.x_splines[q].n_basis - 1
                lx = self.x_splines[q].positions[-1] - self.x_splines[q].positions[0]
                mats_val.append(_centered_gram(g0, self.x_centers[q], lx)[:fx, :fx])
                mats_rough.append(g2[:fx, :fx])
            mats_val.append(Cy0)
            mats_rough.append(Cy2)
            pen = np.zeros((size, size))
            for r in range(len(mats_val)):
                factors = [mats_rough[j] if j == r else mats_val[j]
                           for j in range(len(mats_val))]
                kron = factors[0]
                for f in factors[1:]:
                    kron = np.kron(kron, f)
                pen += kron
            pen_blocks.append(pen)

        self.blocks = blocks
        self.feature_count = offset
        P = np.zeros((offset, offset))
        for (_, sl, _), pb in zip(blocks, pen_blocks):
            P[sl, sl] = pb
        self.penalty = P

    # -- feature evaluation -------------------------------------------------

    def y_features(self, y) -> np.ndarray:
        D = self.y_spline.design(y)
        return (D - self.y_center[None, :])[:, :-1]

    def x_features(self, q: int, x) -> np.ndarray:
        D = self.x_splines[q].design(x)
        return (D - self.x_centers[q][None, :])[:, :-1]

    def term_factor(self, term: tuple[int, ...], X: np.ndarray) -> np.ndarray:
        """Row-wise tensor product of the term's covariate features."""
        out = self.x_features(term[0], X[:, term[0]])
        for q in term[1:]:
            nxt = self.x_features(q, X[:, q])
            out = np.einsum("na,nb->nab", out, nxt).reshape(out.shape[0], -1)
        return out

    def features(self, x, y: float) -> np.ndarray:
        """Full feature vector at a single (x, y); mainly for tests."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        yf = self.y_features([y])[0]
        parts = [yf]
        for term in self.terms:
            u = self.term_factor(term, x[None, :])[0]
            parts.append(np.outer(u, yf).ravel())
        return np.concatenate(parts)

    def roughness(self, coeffs) -> float:
        c = np.asarray(coeffs, dtype=float)
        return float(c @ self.penalty @ c)


def _centered_gram(g0: np.ndarray, centers: np.ndarray, length: float,
                   exact_means: np.ndarray | None = None) -> np.ndarray:
    # int (B_i - c_i)(B_j - c_j) with c the centering constants and int B_j
    # equal to L * exact mean (which may differ from c when c comes from a
    # quadrature rule)
    m = centers if exact_means is None else exact_means
    cm = np.outer(centers, m)
    return g0 - length * (cm + cm.T - np.outer(centers, centers))


def build_basis(cfg: BasisConfig, x_ranges: list[tuple[float, float]],
                y_range: tuple[float, float], y_samples, x_samples,
                quad=None, y_positions=None) -> TensorBasis:
    """Construct the dictionary with equal-quantile knots on the given ranges.

    When the criterion's quadrature rule is supplied, centering constants are
    taken from it so that the rule sees exactly-zero feature averages.
    """
    lo, hi = y_range
    if y_positions is None:
        y_positions = _knot_positions(y_samples, cfg.y_knots, lo, hi)
    y_spline = _Spline1D(np.asarray(y_positions, dtype=float))
    y_center = None
    if quad is not None:
        y_center = (quad.weights @ y_spline.design(quad.nodes)) / (hi - lo)
    x_splines = []
    for q, (xlo, xhi) in enumerate(x_ranges):
        if cfg.x_knot_style == "uniform":
            pos = np.linspace(xlo, xhi, cfg.x_knots_per_dim)
            if xhi <= xlo:
                raise DomainError(f"degenerate range [{xlo}, {xhi}]")
        else:
            pos = _knot_positions(np.asarray(x_samples)[:, q],
                                  cfg.x_knots_per_dim, xlo, xhi)
        x_splines.append(_Spline1D(pos))
    return TensorBasis(cfg=cfg, dim=len(x_ranges), y_spline=y_spline,
                       x_splines=x_splines, terms=cfg.terms_for(len(x_ranges)),
                       y_center=y_center)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

class _FitWork:
    """Design matrices shared across criterion evaluations for one dataset."""

    def __init__(self, basis: TensorBasis, X: np.ndarray, y: np.ndarray,
                 quad, rho=None):
        self.basis = basis
        self.n = y.size
        self.quad = quad
        self.y_data = basis.y_features(y)                 # (n, fy)
        self.y_quad = basis.y_features(quad.nodes)        # (T, fy)
        self.factors = {term: basis.term_factor(term, X)  # (n, f_term)
                        for term in basis.terms}
        if rho is None:
            length = quad.hi - quad.lo
            self.rho_quad = np.full((self.n, quad.nodes.size), 1.0 / length)
        else:
            self.rho_quad = np.array([np.asarray(rho(X[i], quad.nodes), dtype=float)
                                      for i in range(self.n)])

    def eta(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(eta at the data pairs (n,), eta on the quadrature grid (n, T))."""
        b = self.basis
        _, sly, _ = b.blocks[0]
        beta_y = coeffs[sly]
        eta_data = self.y_data @ beta_y
        eta_quad = np.broadcast_to(self.y_quad @ beta_y, (self.n, self.y_quad.shape[0])).copy()
        for (term, sl, shape) in b.blocks[1:]:
            C = coeffs[sl].reshape(-1, shape[-1])         # (f_term, fy)
            UC = self.factors[term] @ C                   # (n, fy)
            eta_data += np.einsum("nf,nf->n", UC, self.y_data)
            eta_quad += UC @ self.y_quad.T
        return eta_data, eta_quad

    def accumulate_grad(self, gdata_weight: np.ndarray, gquad_weight: np.ndarray) -> np.ndarray:
        """Gradient of sum_i [ w_i eta(x_i, y_i) + sum_t V_it eta(x_i, y_t) ]."""
        b = self.basis
        grad = np.zeros(b.feature_count)
        _, sly, _ = b.blocks[0]
        grad[sly] = gdata_weight @ self.y_data + gquad_weight.sum(axis=0) @ self.y_quad
        for (term, sl, shape) in b.blocks[1:]:
            U = self.factors[term]
            part = (U * gdata_weight[:, None]).T @ self.y_data
            part += U.T @ (gquad_weight @ self.y_quad)
            grad[sl] = part.ravel()
        return grad


def _penalty_terms(basis: TensorBasis, coeffs: np.ndarray, lam: float):
    Pc = basis.penalty @ coeffs
    return 0.5 * lam * float(coeffs @ Pc), lam * Pc


def criterion_likelihood(coeffs, basis: TensorBasis, X, y, lam: float,
                         quad=None, work: _FitWork | None = None):
    """Penalized negative log likelihood and its exact gradient.

    The integral over the response interval is the quadrature sum; the
    gradient is exact for that discretized criterion. Overflow in exp(eta)
    is removed by max subtraction.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if not np.all(np.isfinite(coeffs)):
        raise DomainError("non-finite coefficients")
    if work is None:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        quad = quad or gauss_legendre_rule(0.0, 1.0, DEFAULT_QUAD_SIZE)
        work = _FitWork(basis, X, y, quad)
    n = work.n
    eta_data, eta_quad = work.eta(coeffs)
    m = eta_quad.max(axis=1)
    expv = np.exp(eta_quad - m[:, None])
    Z = expv @ work.quad.weights
    log_int = m + np.log(Z)
    pen_val, pen_grad = _penalty_terms(work.basis, coeffs, lam)
    value = -float(np.mean(eta_data - log_int)) + pen_val
    if not np.isfinite(value):
        raise NumericalError("criterion value is not finite")
    post = expv * work.quad.weights[None, :] / Z[:, None]   # rows sum to 1
    grad = work.accumulate_grad(np.full(n, -1.0 / n), post / n) + pen_grad
    return value, grad


def criterion_pseudo(coeffs, basis: TensorBasis, X, y, lam: float,
                     quad=None, rho=None, work: _FitWork | None = None,
                     rho_term: np.ndarray | None = None):
    """Penalized pseudo-likelihood and its exact gradient.

    rho is a conditional reference density rho(x, y_nodes) integrating to one
    over the response interval at every x; the default is uniform. The linear
    rho term is precomputable once per dataset (pass rho_term to reuse it).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if not np.all(np.isfinite(coeffs)):
        raise DomainError("non-finite coefficients")
    if work is None:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        quad = quad or gauss_legendre_rule(0.0, 1.0, DEFAULT_QUAD_SIZE)
        work = _FitWork(basis, X, y, quad, rho=rho)
    n = work.n
    if rho_term is None:
        rho_term = pseudo_rho_term(work)
    eta_data, eta_quad = work.eta(coeffs)
    eta_data = np.clip(eta_data, -700.0, 700.0)
    expneg = np.exp(-eta_data)
    pen_val, pen_grad = _penalty_terms(work.basis, coeffs, lam)
    value = float(np.mean(expneg)) + float(rho_term @ coeffs) + pen_val
    if not np.isfinite(value):
        raise NumericalError("criterion value is not finite")
    grad = work.accumulate_grad(-expneg / n, np.zeros_like(eta_quad)) + rho_term + pen_grad
    return value, grad


def pseudo_rho_term(work: _FitWork) -> np.ndarray:
    """(1/n) sum_i int phi(x_i, y) rho(x_i, y) dy as a coefficient-space vector."""
    b = work.basis
    wr = work.rho_quad * work.quad.weights[None, :]        # (n, T)
    out = np.zeros(b.feature_count)
    _, sly, _ = b.blocks[0]
    out[sly] = wr.sum(axis=0) @ work.y_quad / work.n
    for (term, sl, shape) in b.blocks[1:]:
        U = work.factors[term]
        out[sl] = (U.T @ (wr @ work.y_quad)).ravel() / work.n
    return out


# ---------------------------------------------------------------------------
# fitted model
# ---------------------------------------------------------------------------

@dataclass
class DensityModel:
    basis: TensorBasis
    coefficients: np.ndarray
    lam: float
    mode: str                       # "likelihood" | "pseudo"
    y_lo: float                     # raw response domain (includes the pad)
    y_hi: float
    x_ranges: list[tuple[float, float]]
    quad_size: int = DEFAULT_QUAD_SIZE
    x_names: list[str] | None = None

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        pos = self.basis.y_spline.positions
        self._quad = response_quadrature(pos, self.quad_size)
        # CDF grid concentrated like the knots, so sharp densities stay resolved
        per = max(8, int(np.ceil((_CDF_GRID - 1) / (pos.size - 1))))
        self._tgrid = np.unique(np.concatenate(
            [np.linspace(a, b, per + 1) for a, b in zip(pos[:-1], pos[1:])]))

    @property
    def domain(self) -> tuple[float, float]:
        return (self.y_lo, self.y_hi)

    def _clamp_x(self, X: np.ndarray) -> np.ndarray:
        lo = np.array([r[0] for r in self.x_ranges])
        hi = np.array([r[1] for r in self.x_ranges])
        if np.any(X < lo) or np.any(X > hi):
            warnings.warn("covariate outside the fitted range; clamped",
                          ClampWarning, stacklevel=3)
        return np.clip(X, lo, hi)

    def _eta_rows(self, X: np.ndarray, t: np.ndarray) -> np.ndarray:
        """eta on the normalized grid t for each covariate row; (N, len(t))."""
        b = self.basis
        yq = b.y_features(t)
        _, sly, _ = b.blocks[0]
        eta = np.broadcast_to(yq @ self.coefficients[sly], (X.shape[0], t.size)).copy()
        for (term, sl, shape) in b.blocks[1:]:
            C = self.coefficients[sl].reshape(-1, shape[-1])
            eta += (b.term_factor(term, X) @ C) @ yq.T
        return eta

    def _to_norm(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.y_lo) / (self.y_hi - self.y_lo)

    def cond_density(self, x, y):
        """f(y | x) in raw response units."""
        X = self._clamp_x(np.atleast_2d(np.asarray(x, dtype=float)))
        t = np.atleast_1d(self._to_norm(y))
        if np.any(t < -1e-9) or np.any(t > 1 + 1e-9):
            raise DomainError("response outside the fitted domain")
        t = np.clip(t, 0.0, 1.0)
        eta_q = self._eta_rows(X, self._quad.nodes)[0]
        m = eta_q.max()
        Z = float(np.exp(eta_q - m) @ self._quad.weights)
        eta_t = self._eta_rows(X, t)[0]
        dens_norm = np.exp(eta_t - m) / Z
        out = dens_norm / (self.y_hi - self.y_lo)
        return float(out[0]) if np.isscalar(y) else out

    def cond_cdf(self, x, y):
        """F(y | x); 0 below and 1 above the fitted domain."""
        X = self._clamp_x(np.atleast_2d(np.asarray(x, dtype=float)))
        t = np.atleast_1d(self._to_norm(y))
        F = self._cdf_rows(X, np.clip(t, 0.0, 1.0))[0]
        F = np.where(t < 0.0, 0.0, np.where(t > 1.0, 1.0, F))
        return float(F[0]) if np.isscalar(y) else F

    def _cdf_rows(self, X: np.ndarray, t_query: np.ndarray) -> np.ndarray:
        """Normalized-unit CDF values at t_query for each row of X."""
        eta = self._eta_rows(X, self._tgrid)
        dens = np.exp(eta - eta.max(axis=1, keepdims=True))
        seg = 0.5 * (dens[:, 1:] + dens[:, :-1]) * np.diff(self._tgrid)[None, :]
        cum = np.concatenate([np.zeros((X.shape[0], 1)), np.cumsum(seg, axis=1)], axis=1)
        cum /= cum[:, -1:]
        idx = np.clip(np.searchsorted(self._tgrid, t_query, side="right") - 1,
                      0, self._tgrid.size - 2)
        h = np.diff(self._tgrid)[idx]
        w = (t_query - self._tgrid[idx]) / h
        return cum[:, idx] + w[None, :] * (cum[:, idx + 1] - cum[:, idx])

    def cdf_on_grid(self, X, grid_raw) -> np.ndarray:
        """Batch CDF values (rows of X by grid points), clamped outside the domain."""
        X = self._clamp_x(np.atleast_2d(np.asarray(X, dtype=float)))
        g = np.asarray(grid_raw, dtype=float)
        t = self._to_norm(g)
        inside = (t >= 0.0) & (t <= 1.0)
        out = np.empty((X.shape[0], g.size))
        out[:, t < 0.0] = 0.0
        out[:, t > 1.0] = 1.0
        if inside.any():
            out[:, inside] = self._cdf_rows(X, t[inside])
        return out

    def integral_check(self, x) -> float:
        """Quadrature integral of the conditional density at one x (should be 1)."""
        X = self._clamp_x(np.atleast_2d(np.asarray(x, dtype=float)))
        eta_q = self._eta_rows(X, self._quad.nodes)[0]
        m = eta_q.max()
        Z = float(np.exp(eta_q - m) @ self._quad.weights)
        dens = np.exp(eta_q - m) / Z
        return float(dens @ self._quad.weights)

    def roughness(self) -> float:
        return self.basis.roughness(self.coefficients)


@dataclass
class FitReport:
    criterion_value: float
    grad_norm: float
    iterations: int
    converged: bool
    lam: float
    mode: str
    lambda_grid: list[float] | None = None
    validation_crps: list[float] | None = None


def _minimize(work: _FitWork, lam: float, mode: str, rho_term, max_iter: int,
              gtol: float):
    if mode == "likelihood":
        fun = lambda c: criterion_likelihood(c, work.basis, None, None, lam, work=work)
    elif mode == "pseudo":
        fun = lambda c: criterion_pseudo(c, work.basis, None, None, lam,
                                         work=work, rho_term=rho_term)
    else:
        raise DomainError(f"unknown fit mode {mode!r}")
    x0 = np.zeros(work.basis.feature_count)
    res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "maxfun": 50 * max_iter,
                            "ftol": 1e-15, "gtol": gtol, "maxcor": 20})
    value, grad = fun(res.x)
    return res.x, value, float(np.abs(grad).max()), int(res.nit)


def fit(X, y, cfg: BasisConfig = BasisConfig(), lam: float | None = None,
        lam_grid=None, mode: str = "likelihood", seed: int = 0,
        quad_size: int = DEFAULT_QUAD_SIZE, max_iter: int = 200,
        gtol: float = 1e-6, rho=None, x_names: list[str] | None = None,
        x_ranges: list[tuple[float, float]] | None = None
        ) -> tuple[DensityModel, FitReport]:
    """Fit a conditional density on (X, y) by quasi-Newton minimization.

    With a lambda grid (the default when no single lam is given), the penalty
    weight is chosen by CRPS on a held-out 20% split of the rows, then the
    model is refit on all rows. The response domain, knots and normalization
    come from the full input either way.

    `x_ranges` optionally widens the covariate box (e.g. to the ranges of the
    source dataset the rows were reduced from); queries outside it are still
    clamped at evaluation time.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise DomainError("empty reduced set")
    if X.shape[0] != y.size:
        raise DomainError("covariates and responses disagree on the row count")

    y_lo, y_hi = response_domain(y)
    t = (y - y_lo) / (y_hi - y_lo)
    if x_ranges is None:
        x_ranges = [(float(X[:, q].min()), float(X[:, q].max()))
                    for q in range(X.shape[1])]
    else:
        x_ranges = [(min(float(lo), float(X[:, q].min())),
                     max(float(hi), float(X[:, q].max())))
                    for q, (lo, hi) in enumerate(x_ranges)]
    y_positions = _knot_positions(t, cfg.y_knots, 0.0, 1.0)
    quad = response_quadrature(y_positions, quad_size)
    basis = build_basis(cfg, x_ranges, (0.0, 1.0), t, X, quad=quad,
                        y_positions=y_positions)

    lambda_grid = None
    val_scores = None
    if lam is None:
        lambda_grid = [float(v) for v in (lam_grid if lam_grid is not None
                                          else DEFAULT_LAMBDA_GRID)]
        if len(lambda_grid) == 1:
            lam = lambda_grid[0]
        else:
            rng = np.random.default_rng(seed)
            perm = rng.permutation(y.size)
            n_val = max(1, y.size // 5)
            val, train = perm[:n_val], perm[n_val:]
            if train.size == 0:
                raise DomainError("reduced set too small for a validation split")
            work_tr = _FitWork(basis, X[train], t[train], quad, rho=rho)
            rho_tr = pseudo_rho_term(work_tr) if mode == "pseudo" else None
            tgrid = mixed_eval_grid(0.0, 1.0, t[val], 513)
            val_scores = []
            for lv in lambda_grid:
                coeffs, *_ = _minimize(work_tr, lv, mode, rho_tr, max_iter, gtol)
                m = DensityModel(basis=basis, coefficients=coeffs, lam=lv, mode=mode,
                                 y_lo=0.0, y_hi=1.0, x_ranges=x_ranges,
                                 quad_size=quad_size)
                F = m.cdf_on_grid(X[val], tgrid)
                val_scores.append(float(np.mean(crps_grid_batch(F, tgrid, t[val]))))
            lam = lambda_grid[int(np.argmin(val_scores))]

    work = _FitWork(basis, X, t, quad, rho=rho)
    rho_term = pseudo_rho_term(work) if mode == "pseudo" else None
    coeffs, value, grad_norm, iters = _minimize(work, lam, mode, rho_term,
                                                max_iter, gtol)
    model = DensityModel(basis=basis, coefficients=coeffs, lam=float(lam),
                         mode=mode, y_lo=y_lo, y_hi=y_hi, x_ranges=x_ranges,
                         quad_size=quad_size, x_names=x_names)
    report = FitReport(criterion_value=value, grad_norm=grad_norm,
                       iterations=iters, converged=grad_norm <= gtol * 10,
                       lam=float(lam), mode=mode, lambda_grid=lambda_grid,
                       validation_crps=val_scores)
    return model, report


def evaluation_table(model: DensityModel, X_points, grid) -> list[tuple]:
    """(row, covariate..., y, density, cdf) tuples on a response grid, for
    CSV export and plotting."""
    X_points = np.atleast_2d(np.asarray(X_points, dtype=float))
    grid = np.asarray(grid, dtype=float)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampWarning)
        F = model.cdf_on_grid(X_points, grid)
        for i, x in enumerate(X_points):
            inside = (grid >= model.y_lo) & (grid <= model.y_hi)
            dens = np.zeros_like(grid)
            dens[inside] = model.cond_density(x, grid[inside])
            for j, y in enumerate(grid):
                out.append((i, *x, float(y), float(dens[j]), float(F[i, j])))
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def model_to_json(model: DensityModel) -> str:
    doc = {
        "y_knot_positions": model.basis.y_spline.positions.tolist(),
        "x_knot_positions": [s.positions.tolist() for s in model.basis.x_splines],
        "included_terms": [list(tm) for tm in model.basis.terms],
        "y_knots": model.basis.cfg.y_knots,
        "x_knots_per_dim": model.basis.cfg.x_knots_per_dim,
        "x_knot_style": model.basis.cfg.x_knot_style,
        "coefficients": model.coefficients.tolist(),
        "lambda": model.lam,
        "mode": model.mode,
        "domain": [model.y_lo, model.y_hi],
        "x_ranges": [list(r) for r in model.x_ranges],
        "quad_size": model.quad_size,
        "x_names": model.x_names,
    }
    return json.dumps(doc, indent=2)


def model_from_json(text: str) -> DensityModel:
    doc = json.loads(text)
    cfg = BasisConfig(y_knots=doc["y_knots"], x_knots_per_dim=doc["x_knots_per_dim"],
                      included_terms=tuple(tuple(tm) for tm in doc["included_terms"]),
                      x_knot_style=doc.get("x_knot_style", "quantile"))
    y_spline = _Spline1D(np.array(doc["y_knot_positions"]))
    quad = response_quadrature(y_spline.positions, doc["quad_size"])
    span = y_spline.positions[-1] - y_spline.positions[0]
    y_center = (quad.weights @ y_spline.design(quad.nodes)) / span
    basis = TensorBasis(
        cfg=cfg, dim=len(doc["x_ranges"]),
        y_spline=y_spline,
        x_splines=[_Spline1D(np.array(p)) for p in doc["x_knot_positions"]],
        terms=tuple(tuple(tm) for tm in doc["included_terms"]),
        y_center=y_center)
    return DensityModel(
        basis=basis, coefficients=np.array(doc["coefficients"]),
        lam=doc["lambda"], mode=doc["mode"], y_lo=doc["domain"][0],
        y_hi=doc["domain"][1], x_ranges=[tuple(r) for r in doc["x_ranges"]],
        quad_size=doc["quad_size"], x_names=doc.get("x_names"))
