"""Input validation helpers used at module boundaries."""

from __future__ import annotations

import numpy as np

from .errors import NumericalError, ValidationError


def as_matrix(x, name: str = "input", dtype=np.float64) -> np.ndarray:
    """Coerce ``x`` to a 2-D contiguous array of the given dtype (copying)."""
    a = np.array(x, dtype=dtype, order="C")
    if a.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got {a.ndim}-D shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"{name} must have at least one row and one column, got {a.shape}")
    return a


def require_finite(a: np.ndarray, name: str = "input") -> np.ndarray:
    """Reject NaN/Inf, naming the first offending position in row-major order."""
    finite = np.isfinite(a)
    if not finite.all():
        flat = int(np.argmin(finite.ravel(order="C")))
        idx = np.unravel_index(flat, a.shape)
        raise NumericalError(
            f"{name} contains a non-finite value {a[idx]!r} at index {tuple(int(i) for i in idx)}"
        )
    return a


def as_weight_array(x, name: str, ndim: int) -> np.ndarray:
    """Coerce a stored weight tensor to contiguous float32 with the given rank."""
    a = np.ascontiguousarray(x, dtype=np.float32)
    if a.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-D, got {a.ndim}-D shape {a.shape}")
    return a


def check_index_list(indices, length: int, name: str = "indices") -> np.ndarray:
    """Validate a strictly ascending list of distinct indices into [0, length)."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size < 1:
        raise ValidationError(f"{name} must be a non-empty 1-D index sequence")
    if idx.min() < 0 or idx.max() >= length:
        raise ValidationError(f"{name} out of range for length {length}: {idx.tolist()}")
    if np.any(np.diff(idx) <= 0):
        raise ValidationError(f"{name} must be strictly ascending without repeats")
    return idx
