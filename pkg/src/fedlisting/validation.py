"""Small input-validation helpers used across modules and estimators."""

import numpy as np

from .errors import ValidationError

SIMPLEX_ATOL = 1e-6


def check_simplex(vec, name: str = "distribution") -> np.ndarray:
    """Validate a nonnegative vector summing to 1 (within 1e-6); returns float64."""
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name} must be a nonempty 1-D vector")
    if np.any(arr < -SIMPLEX_ATOL):
        raise ValidationError(f"{name} has negative entries")
    total = float(arr.sum())
    if abs(total - 1.0) > SIMPLEX_ATOL:
        raise ValidationError(f"{name} sums to {total}, expected 1")
    return arr


def check_matrix(x, name: str = "X") -> np.ndarray:
    """Validate a finite 2-D float array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_node_indices(indices, num_nodes: int, name: str = "subset") -> np.ndarray:
    """Validate a sorted, unique, in-range index vector; returns int64."""
    arr = np.asarray(indices, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name} must be a nonempty 1-D index vector")
    if np.any(arr < 0) or np.any(arr >= num_nodes):
        raise ValidationError(f"{name} has indices outside [0, {num_nodes})")
    if np.any(np.diff(arr) <= 0):
        raise ValidationError(f"{name} indices must be strictly increasing")
    return arr


def check_positive(value, name: str):
    if value is None or not value > 0:
        raise ValidationError(f"{name} must be > 0, got {value!r}")
    return value


def check_fraction(value, name: str, *, closed_right: bool = False):
    hi_ok = value <= 1 if closed_right else value < 1
    if not (0 < value and hi_ok):
        bound = "(0, 1]" if closed_right else "(0, 1)"
        raise ValidationError(f"{name} must be in {bound}, got {value!r}")
    return value
