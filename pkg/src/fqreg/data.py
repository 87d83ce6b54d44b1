"""Functional dataset container and input validation helpers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError

__all__ = ["FunctionalDataset", "check_curves", "check_design", "check_grid"]


def _first_nonfinite(a):
    bad = np.argwhere(~np.isfinite(a))
    return tuple(int(i) for i in bad[0]) if bad.size else None


def check_curves(y, name="curves"):
    """Return ``y`` as a finite float (N, T) array or raise DataError."""
    try:
        y = np.asarray(y, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{name}: non-numeric values ({exc})") from None
    if y.ndim != 2:
        raise DataError(f"{name}: expected a 2-D array, got shape {y.shape}")
    loc = _first_nonfinite(y)
    if loc is not None:
        raise DataError(f"{name}: non-finite value at row {loc[0]}, column {loc[1]}")
    return y


def check_grid(grid, n):
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size != n:
        raise DataError(f"grid has {grid.size} points but curves have {n} columns")
    if not np.all(np.isfinite(grid)):
        raise DataError("grid contains non-finite values")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        i = int(np.argmax(np.diff(grid) <= 0))
        raise DataError(f"grid is not strictly increasing at position {i + 1}")
    return grid


def check_design(X, n_rows=None, name="design"):
    """Validate a design matrix: finite, 2-D, full column rank."""
    X = check_curves(X, name)
    if n_rows is not None and X.shape[0] != n_rows:
        raise DataError(f"{name} has {X.shape[0]} rows, expected {n_rows}")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DataError(f"{name} is rank deficient ({X.shape[1]} columns)")
    return X


@dataclass(frozen=True, eq=False)
class FunctionalDataset:
    """``N`` curves observed on a common increasing grid of ``T`` points."""

    y: np.ndarray
    grid: np.ndarray

    def __post_init__(self):
        y = check_curves(self.y)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "grid", check_grid(self.grid, y.shape[1]))

    @classmethod
    def from_curves(cls, y, grid=None):
        y = np.asarray(y, dtype=float)
        if grid is None:
            grid = np.arange(y.shape[-1], dtype=float)
        return cls(y, grid)

    @property
    def n_curves(self):
        return self.y.shape[0]

    @property
    def grid_len(self):
        return self.y.shape[1]
