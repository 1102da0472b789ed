"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def check_matrix(x, rows: int | None = None, cols: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a finite 2-d float array; 1-d input becomes a single column."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be nonempty, got shape {arr.shape}")
    if rows is not None and arr.shape != (rows, cols):
        raise ValueError(f"{name} has shape {arr.shape}, expected {(rows, cols)}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_shape(x: np.ndarray, rows: int, cols: int, name: str = "x") -> np.ndarray:
    """Shape-only check for hot paths; assumes a numeric 2-d array."""
    if x.shape != (rows, cols):
        raise ValueError(f"{name} has shape {x.shape}, expected {(rows, cols)}")
    return x


def check_positive(value: float, name: str) -> float:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return float(value)


def check_nonnegative(value: float, name: str) -> float:
    if value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return float(value)
