"""Reduce a dataset to n coupled (covariate, response) pairs.

Four reducers share the ReducedSet output contract:

* csp_reduce      - partition the covariate space, solve a 1D support-point
                    problem on each cell's responses with proportional
                    allocation, couple each synthetic response with the
                    covariates of its nearest observed response, and union
                    the cells.
* mcsp_reduce     - the marginal variant: run the same pipeline one covariate
                    dimension at a time and concatenate.
* uniform_subsample - seeded rows without replacement (randomized baseline).
* vanilla_sp_reduce - support points of the joint (x, y) cloud, snapped to
                    the nearest observed rows (deterministic baseline).

Per-cell and per-dimension work units are independent; with threads > 1 they
run concurrently and are assembled in fixed cell/dimension order, so output
is bit-identical to the serial path.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .data import Dataset
from .errors import DomainError
from .partitioning import Partition, PartitionConfig, build_partition, choose_K
from .support_points import SpConfig, support_points_1d, support_points_nd

REDUCED_CSV_EXTRA_COLS = ["cell_id", "coupled_row", "method"]


@dataclass
class ReducedSet:
    X: np.ndarray              # (n, d) coupled covariates
    y: np.ndarray              # (n,) responses (synthetic for csp/mcsp)
    cell_ids: np.ndarray       # (n,) int
    coupled_rows: np.ndarray   # (n,) source row index in the input dataset
    method: str                # csp | mcsp | uniform | vanilla_sp
    seed: int
    x_names: list[str]
    y_name: str
    provenance: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass
class Allocation:
    n_k: np.ndarray

    def __post_init__(self):
        self.n_k = np.asarray(self.n_k, dtype=int)



def _x_ranges(dataset: Dataset) -> list[list[float]]:
    return [[float(dataset.X[:, q].min()), float(dataset.X[:, q].max())]
            for q in range(dataset.dim)]

def allocate_sizes(N_k, n: int, mode: str = "proportional") -> Allocation:
    """Split n among cells: largest-remainder proportional or floor-equal.

    Empty cells always get 0. Remainder ties break toward the lower cell
    index; equal-mode leftovers go to the lowest-index non-empty cells.
    """
    N_k = np.asarray(N_k, dtype=int)
    if n < 1:
        raise DomainError("n must be >= 1")
    nonempty = np.nonzero(N_k > 0)[0]
    if nonempty.size == 0:
        raise DomainError("all cells are empty")
    out = np.zeros(N_k.size, dtype=int)

    if mode == "proportional":
        N = int(N_k.sum())
        quota = n * N_k[nonempty] / N
        base = np.floor(quota).astype(int)
        remainder = quota - base
        leftover = n - int(base.sum())
        # stable sort on -remainder keeps lower cell indices first on ties
        order = np.argsort(-remainder, kind="stable")
        base[order[:leftover]] += 1
        out[nonempty] = base
        if np.any(out[nonempty] > 10 * N_k[nonempty]):
            raise DomainError("allocation exceeds 10x a cell's size")
    elif mode == "equal":
        base, leftover = divmod(n, nonempty.size)
        out[nonempty] = base
        out[nonempty[:leftover]] += 1
    else:
        raise DomainError(f"unknown allocation mode {mode!r}")
    return Allocation(n_k=out)


def conditional_support_points_cell(responses_in_cell, n_k: int, cfg: SpConfig):
    """1D support points of one cell's responses (sorted ascending)."""
    return support_points_1d(responses_in_cell, n_k, cfg)


def couple_covariates(y_star, cell_X: np.ndarray, cell_y: np.ndarray,
                      cell_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pair each synthetic response with the covariates of the cell row whose
    observed response is nearest; ties break to the lowest row index.

    Returns (coupled covariates, source row ids). Rows may be reused.
    """
    y_star = np.asarray(y_star, dtype=float)
    if cell_y.size == 0:
        raise DomainError("cannot couple within an empty cell")
    order = np.argsort(cell_y, kind="stable")
    ys, rows_sorted = cell_y[order], cell_rows[order]
    # stable sort keeps ascending row index within runs of equal responses,
    # so the first position of a run carries the run's lowest row index
    first = np.searchsorted(ys, ys, side="left")
    pos = np.searchsorted(ys, y_star, side="left")
    lo = np.clip(pos - 1, 0, ys.size - 1)
    hi = np.clip(pos, 0, ys.size - 1)
    d_lo = np.abs(y_star - ys[lo])
    d_hi = np.abs(ys[hi] - y_star)
    pick = np.where(d_hi < d_lo, hi, lo)
    tie = (d_hi == d_lo) & (ys[hi] != ys[lo])
    if np.any(tie):
        lo_wins = rows_sorted[first[lo[tie]]] <= rows_sorted[first[hi[tie]]]
        pick[tie] = np.where(lo_wins, lo[tie], hi[tie])
    cand = first[pick]
    return cell_X[order[cand]], rows_sorted[cand]


def _reduce_one_cell(dataset: Dataset, rows: np.ndarray, n_k: int,
                     sp_cfg: SpConfig) -> dict:
    res = conditional_support_points_cell(dataset.y[rows], n_k, sp_cfg)
    X_star, coupled = couple_covariates(res.points, dataset.X[rows],
                                        dataset.y[rows], rows)
    return {"y_star": res.points, "X_star": X_star, "coupled": coupled,
            "objective": res.objective, "warnings": res.warnings}


def _run_cells(tasks, threads: int):
    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda f: f(), tasks))
    return [f() for f in tasks]


def csp_reduce(dataset: Dataset, n: int, part_cfg: PartitionConfig = PartitionConfig(),
               sp_cfg: SpConfig = SpConfig(), alloc_mode: str = "proportional",
               threads: int = 1) -> ReducedSet:
    """Partition, per-cell 1D support points, nearest-response coupling, union."""
    if n < 1 or n > dataset.n_rows:
        raise DomainError(f"n must be in [1, {dataset.n_rows}]")
    K_target = part_cfg.K_target if part_cfg.K_target is not None else choose_K(n)
    partition = build_partition(dataset.X, part_cfg, K_target, sp_cfg)
    alloc = allocate_sizes(partition.sizes, n, mode=alloc_mode)

    active = [k for k in range(partition.K) if alloc.n_k[k] > 0]
    tasks = [
        (lambda rows=partition.cells[k], nk=int(alloc.n_k[k]):
         _reduce_one_cell(dataset, rows, nk, sp_cfg))
        for k in active
    ]
    results = _run_cells(tasks, threads)

    X_parts, y_parts, cells, coupled, objectives, warnings = [], [], [], [], [], []
    for k, res in zip(active, results):
        X_parts.append(res["X_star"])
        y_parts.append(res["y_star"])
        cells.append(np.full(res["y_star"].size, k))
        coupled.append(res["coupled"])
        objectives.append(res["objective"])
        warnings.extend(f"cell {k}: {w}" for w in res["warnings"])

    provenance = {
        "K": partition.K,
        "kind": partition.kind,
        "x_ranges_full": _x_ranges(dataset),
        "n_k": alloc.n_k.tolist(),
        "N_k": partition.sizes.tolist(),
        "cell_objectives": objectives,
        "alloc_mode": alloc_mode,
        "warnings": warnings + partition.warnings,
    }
    return ReducedSet(
        X=np.concatenate(X_parts), y=np.concatenate(y_parts),
        cell_ids=np.concatenate(cells), coupled_rows=np.concatenate(coupled),
        method="csp", seed=sp_cfg.seed, x_names=list(dataset.x_names),
        y_name=dataset.y_name, provenance=provenance)


def default_marginal_allocation(n: int, d: int) -> list[int]:
    base, leftover = divmod(n, d)
    return [base + (1 if q < leftover else 0) for q in range(d)]


def mcsp_reduce(dataset: Dataset, n: int, n_q: list[int] | None = None,
                part_cfg: PartitionConfig = PartitionConfig(),
                sp_cfg: SpConfig = SpConfig(), alloc_mode: str = "proportional",
                threads: int = 1) -> ReducedSet:
    """One covariate dimension at a time: partition on x_q alone, solve and
    couple within each cell (keeping the full covariate vector), concatenate."""
    d = dataset.dim
    if n_q is None:
        n_q = default_marginal_allocation(n, d)
    if len(n_q) != d or sum(n_q) != n:
        raise DomainError(f"per-dimension sizes must have length {d} and sum to {n}")

    def reduce_dim(q: int) -> ReducedSet:
        sub = Dataset(dataset.X[:, [q]], dataset.y, [dataset.x_names[q]], dataset.y_name)
        dim_cfg = PartitionConfig(strategy=part_cfg.strategy,
                                  K_target=choose_K(n_q[q]), seed=part_cfg.seed)
        return csp_reduce(sub, n_q[q], dim_cfg, sp_cfg, alloc_mode, threads=1)

    parts = _run_cells([lambda q=q: reduce_dim(q) for q in range(d) if n_q[q] > 0],
                       threads)

    X_parts, y_parts, cells, coupled = [], [], [], []
    per_dim = []
    offset = 0
    for q, red in zip([q for q in range(d) if n_q[q] > 0], parts):
        X_parts.append(dataset.X[red.coupled_rows])  # full covariate vectors
        y_parts.append(red.y)
        cells.append(red.cell_ids + offset)
        coupled.append(red.coupled_rows)
        per_dim.append({"dim": q, "n_q": int(n_q[q]), "K_q": red.provenance["K"],
                        "cell_id_offset": offset})
        offset += red.provenance["K"]

    provenance = {"per_dimension": per_dim, "n_q": list(map(int, n_q)),
                  "alloc_mode": alloc_mode, "x_ranges_full": _x_ranges(dataset)}
    return ReducedSet(
        X=np.concatenate(X_parts), y=np.concatenate(y_parts),
        cell_ids=np.concatenate(cells), coupled_rows=np.concatenate(coupled),
        method="mcsp", seed=sp_cfg.seed, x_names=list(dataset.x_names),
        y_name=dataset.y_name, provenance=provenance)


def uniform_subsample(dataset: Dataset, n: int, seed: int = 0) -> ReducedSet:
    """Seeded sample of n distinct rows, kept as observed pairs."""
    if n < 1 or n > dataset.n_rows:
        raise DomainError(f"n must be in [1, {dataset.n_rows}]")
    rng = np.random.default_rng(seed)
    rows = rng.choice(dataset.n_rows, size=n, replace=False)
    return ReducedSet(
        X=dataset.X[rows].copy(), y=dataset.y[rows].copy(),
        cell_ids=np.zeros(n, dtype=int), coupled_rows=rows,
        method="uniform", seed=seed, x_names=list(dataset.x_names),
        y_name=dataset.y_name, provenance={"x_ranges_full": _x_ranges(dataset)})


def vanilla_sp_reduce(dataset: Dataset, n: int, sp_cfg: SpConfig = SpConfig(init="random_subsample")) -> ReducedSet:
    """Support points of the joint (x, y) cloud, snapped to observed rows."""
    if n < 1 or n > dataset.n_rows:
        raise DomainError(f"n must be in [1, {dataset.n_rows}]")
    joint = np.column_stack([dataset.X, dataset.y])
    res = support_points_nd(joint, n, sp_cfg)
    # snap each synthetic point to its nearest observed row (ties: lowest row)
    snapped = np.empty(n, dtype=int)
    block = max(1, (1 << 22) // max(dataset.n_rows, 1))
    for start in range(0, n, block):
        snapped[start:start + block] = np.argmin(
            cdist(res.points[start:start + block], joint), axis=1)
    provenance = {
        "x_ranges_full": _x_ranges(dataset),
        "pre_snap_objective": res.objective,
        "snap_distance_max": float(np.linalg.norm(res.points - joint[snapped], axis=1).max()),
        "solver_iters": res.iters_used,
        "warnings": res.warnings,
        "pre_snap_points": res.points,
    }
    return ReducedSet(
        X=dataset.X[snapped].copy(), y=dataset.y[snapped].copy(),
        cell_ids=np.zeros(n, dtype=int), coupled_rows=snapped,
        method="vanilla_sp", seed=sp_cfg.seed, x_names=list(dataset.x_names),
        y_name=dataset.y_name, provenance=provenance)


def grouped_energy_objective(partition: Partition, reduced: ReducedSet,
                             dataset: Dataset) -> dict[int, float]:
    """Per-cell 1D energy objective of the reduced responses (grouped by the
    given partition) against each cell's data. Cells where the reduced set
    has no points are absent from the result; compare two reductions on the
    intersection of their occupied cells."""
    from .support_points import empirical_energy_objective
    red_cells = partition.cell_of[reduced.coupled_rows]
    out = {}
    for k in range(partition.K):
        data_rows = partition.cells[k]
        if data_rows.size == 0:
            continue
        pts = reduced.y[red_cells == k]
        if pts.size == 0:
            continue
        out[k] = empirical_energy_objective(pts, dataset.y[data_rows])
    return out


# ---------------------------------------------------------------------------
# CSV round trip (the reduce -> fit wire format)
# ---------------------------------------------------------------------------

def write_reduced_csv(path, reduced: ReducedSet) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*reduced.x_names, reduced.y_name, *REDUCED_CSV_EXTRA_COLS])
        for i in range(reduced.n):
            writer.writerow([repr(float(v)) for v in reduced.X[i]]
                            + [repr(float(reduced.y[i])), int(reduced.cell_ids[i]),
                               int(reduced.coupled_rows[i]), reduced.method])


def read_reduced_csv(path, x_cols: list[str], y_col: str) -> ReducedSet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DomainError(f"{path}: missing header row")
        missing = [c for c in [*x_cols, y_col, *REDUCED_CSV_EXTRA_COLS]
                   if c not in reader.fieldnames]
        if missing:
            raise DomainError(f"{path}: columns not found: {missing}")
        X_rows, y_rows, cells, coupled, methods = [], [], [], [], []
        for row in reader:
            X_rows.append([float(row[c]) for c in x_cols])
            y_rows.append(float(row[y_col]))
            cells.append(int(row["cell_id"]))
            coupled.append(int(row["coupled_row"]))
            methods.append(row["method"])
    if not y_rows:
        raise DomainError(f"{path}: no rows")
    return ReducedSet(
        X=np.array(X_rows), y=np.array(y_rows), cell_ids=np.array(cells),
        coupled_rows=np.array(coupled), method=methods[0], seed=-1,
        x_names=list(x_cols), y_name=y_col, provenance={"source": str(path)})
