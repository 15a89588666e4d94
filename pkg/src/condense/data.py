"""Tabular (covariate, response) datasets and their CSV round trip.

CSV dialect: comma-separated, UTF-8, '.' decimal, header required. Columns are
addressed by name, never by position. Rows with missing or non-finite cells in
the selected columns are rejected with their row numbers reported.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass
class Dataset:
    X: np.ndarray          # (N, d) float
    y: np.ndarray          # (N,) float
    x_names: list[str]
    y_name: str

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.shape[0] != self.y.size:
            raise DomainError("covariates and responses disagree on the row count")
        if self.X.shape[1] != len(self.x_names):
            raise DomainError("x_names does not match the covariate dimension")

    @property
    def n_rows(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.X[rows], self.y[rows], list(self.x_names), self.y_name)


def read_dataset_csv(path, x_cols: list[str], y_col: str) -> tuple[Dataset, list[int]]:
    """Load selected columns; returns the dataset and rejected 1-based row numbers."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DomainError(f"{path}: missing header row")
        missing = [c for c in [*x_cols, y_col] if c not in reader.fieldnames]
        if missing:
            raise DomainError(f"{path}: columns not found: {missing}")
        X_rows, y_rows, rejected = [], [], []
        for line_no, row in enumerate(reader, start=1):
            try:
                xs = [float(row[c]) for c in x_cols]
                yv = float(row[y_col])
            except (TypeError, ValueError):
                rejected.append(line_no)
                continue
            if not all(np.isfinite(xs)) or not np.isfinite(yv):
                rejected.append(line_no)
                continue
            X_rows.append(xs)
            y_rows.append(yv)
    if not y_rows:
        raise DomainError(f"{path}: no usable rows")
    return Dataset(np.array(X_rows), np.array(y_rows), list(x_cols), y_col), rejected


def write_dataset_csv(path, dataset: Dataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*dataset.x_names, dataset.y_name])
        for i in range(dataset.n_rows):
            writer.writerow([repr(float(v)) for v in dataset.X[i]]
                            + [repr(float(dataset.y[i]))])
