"""Covariate-space partitioning: equal-width bins and Voronoi tessellations.

A Partition assigns every row to exactly one of K disjoint cells. Bin cells
may be empty (they stay in the index space with N_k = 0 and are skipped
downstream); Voronoi cells are whatever the nearest-center rule produces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError
from .support_points import SpConfig, support_points_nd

KMEANS_MAX_ITERS = 100


@dataclass(frozen=True)
class PartitionConfig:
    strategy: str = "bins"       # bins | voronoi_kmeans | voronoi_sp
    K_target: int | None = None  # default: choose_K(n) at the call site
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in ("bins", "voronoi_kmeans", "voronoi_sp"):
            raise DomainError(f"unknown partition strategy {self.strategy!r}")
        if self.K_target is not None and self.K_target < 1:
            raise DomainError("K_target must be >= 1")


@dataclass
class Partition:
    kind: str                      # "bins" | "voronoi"
    K: int
    cell_of: np.ndarray            # (N,) int cell index per row
    cells: list[np.ndarray]        # per-cell row-index arrays (may be empty)
    descriptors: dict              # bins: {"edges": [per-dim edge arrays]}; voronoi: {"centers": array}
    warnings: list[str] = field(default_factory=list)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([c.size for c in self.cells], dtype=int)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def choose_K(n: int) -> int:
    """Partition-count rule K(n) = round(n^(3/5)), at least 1."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return max(1, _round_half_up(float(n) ** 0.6))


def _cells_from_assignment(cell_of: np.ndarray, K: int) -> list[np.ndarray]:
    order = np.argsort(cell_of, kind="stable")
    bounds = np.searchsorted(cell_of[order], np.arange(K + 1))
    return [order[bounds[k]:bounds[k + 1]] for k in range(K)]


def bin_partition(X, K_target: int) -> Partition:
    """Equal-width bins, round(K_target^(1/d)) intervals per dimension.

    Intervals are left-closed; the last interval in each dimension is also
    right-closed. Zero-range dimensions collapse to a single interval.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise DomainError("empty covariate matrix")
    if K_target < 1:
        raise DomainError("K_target must be >= 1")
    N, d = X.shape
    kappa = max(1, _round_half_up(K_target ** (1.0 / d)))

    warnings = []
    edges, kappas = [], []
    for q in range(d):
        lo, hi = float(X[:, q].min()), float(X[:, q].max())
        if hi <= lo:
            warnings.append(f"dimension {q} has zero range; using a single interval")
            edges.append(np.array([lo, lo]))
            kappas.append(1)
        else:
            edges.append(np.linspace(lo, hi, kappa + 1))
            kappas.append(kappa)

    idx = np.zeros(N, dtype=int)
    for q in range(d):
        kq = kappas[q]
        if kq == 1:
            iq = np.zeros(N, dtype=int)
        else:
            iq = np.clip(np.searchsorted(edges[q], X[:, q], side="right") - 1, 0, kq - 1)
        idx = idx * kq + iq

    K = int(np.prod(kappas))
    return Partition(kind="bins", K=K, cell_of=idx,
                     cells=_cells_from_assignment(idx, K),
                     descriptors={"edges": edges, "kappas": kappas},
                     warnings=warnings)


def _kmeans_pp_init(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(X.shape[0])]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0:
            centers[k:] = X[rng.choice(X.shape[0], size=K - k)]
            break
        probs = d2 / total
        centers[k] = X[rng.choice(X.shape[0], p=probs)]
        d2 = np.minimum(d2, np.sum((X - centers[k]) ** 2, axis=1))
    return centers


def kmeans_centers(X, K: int, seed: int = 0) -> np.ndarray:
    """Lloyd's iterations from seeded k-means++ until the assignment stops
    changing (or 100 iterations); centers ordered by first-assigned row index."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if K > X.shape[0]:
        raise DomainError(f"K={K} exceeds the number of rows {X.shape[0]}")
    if K < 1:
        raise DomainError("K must be >= 1")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(X, K, rng)
    assign = np.argmin(cdist(X, centers), axis=1)
    for _ in range(KMEANS_MAX_ITERS):
        for k in range(K):
            members = X[assign == k]
            if members.shape[0]:
                centers[k] = members.mean(axis=0)
        new_assign = np.argmin(cdist(X, centers), axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    first_row = np.full(K, np.iinfo(np.int64).max, dtype=np.int64)
    for k in range(K):
        rows = np.nonzero(assign == k)[0]
        if rows.size:
            first_row[k] = rows[0]
    return centers[np.argsort(first_row, kind="stable")]


def sp_centers(X, K: int, cfg: SpConfig = SpConfig(init="random_subsample")) -> np.ndarray:
    """Voronoi centers chosen as support points of the covariate cloud."""
    return support_points_nd(X, K, cfg).points


def voronoi_partition(X, centers) -> Partition:
    """Assign each row to its nearest center; ties go to the lowest index."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if C.shape[0] == 0:
        raise DomainError("no centers")
    if C.shape[1] != X.shape[1]:
        raise DomainError(f"dimension mismatch: rows have {X.shape[1]}, centers {C.shape[1]}")
    assign = np.argmin(cdist(X, C), axis=1)
    return Partition(kind="voronoi", K=C.shape[0], cell_of=assign,
                     cells=_cells_from_assignment(assign, C.shape[0]),
                     descriptors={"centers": C})


def build_partition(X, cfg: PartitionConfig, K: int, sp_cfg: SpConfig | None = None) -> Partition:
    """Dispatch on the configured strategy with a resolved cell count K."""
    if cfg.strategy == "bins":
        return bin_partition(X, K)
    K_eff = min(K, np.atleast_2d(np.asarray(X)).shape[0])
    if cfg.strategy == "voronoi_kmeans":
        centers = kmeans_centers(X, K_eff, seed=cfg.seed)
    else:
        centers = sp_centers(X, K_eff, sp_cfg or SpConfig(seed=cfg.seed, init="random_subsample"))
    return voronoi_partition(X, centers)


def partition_to_json(p: Partition) -> str:
    doc = {
        "kind": p.kind,
        "K": p.K,
        "sizes": p.sizes.tolist(),
        "warnings": p.warnings,
    }
    if p.kind == "bins":
        doc["edges"] = [e.tolist() for e in p.descriptors["edges"]]
        doc["kappas"] = p.descriptors["kappas"]
    else:
        doc["centers"] = p.descriptors["centers"].tolist()
    return json.dumps(doc, indent=2)
