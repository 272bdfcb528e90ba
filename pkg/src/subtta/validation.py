"""Input validation helpers used across modules.

All numeric inputs are coerced to 64-bit floats; file formats may store 32-bit
values but internal arithmetic always runs in float64.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch, InvalidMatrix

SYM_RTOL = 1e-12
UNIT_ROW_ATOL = 1e-10


def as_float_array(x, name: str = "array") -> np.ndarray:
    """Coerce to a float64 ndarray and reject non-finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix(f"{name} contains non-finite entries")
    return arr


def check_matrix(x, name: str = "matrix") -> np.ndarray:
    arr = as_float_array(x, name)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def check_symmetric(x, name: str = "matrix") -> np.ndarray:
    """Validate a square symmetric matrix (relative tolerance on asymmetry)."""
    arr = check_matrix(x, name)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {arr.shape}")
    scale = np.linalg.norm(arr)
    asym = np.linalg.norm(arr - arr.T)
    if asym > SYM_RTOL * max(scale, 1.0):
        raise InvalidMatrix(f"{name} is not symmetric (asymmetry {asym:.3e})")
    return arr


def check_unit_rows(x, name: str = "matrix", atol: float = UNIT_ROW_ATOL) -> np.ndarray:
    arr = check_matrix(x, name)
    norms = np.linalg.norm(arr, axis=1)
    if np.any(np.abs(norms - 1.0) > atol):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise InvalidMatrix(f"{name} rows must be unit-norm (worst deviation {worst:.3e})")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "operands") -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{what} have shapes {a.shape} vs {b.shape}")
