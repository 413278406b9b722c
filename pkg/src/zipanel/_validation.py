"""Small input-validation helpers used by the estimator classes."""

from __future__ import annotations

import numpy as np

from .errors import UsageError


def as_float_vector(x, name="x"):
    """Coerce to a contiguous 1-d float array, rejecting NaN/inf."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise UsageError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def as_float_matrix(x, name="X"):
    """Coerce to a 2-d float array, rejecting NaN/inf."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise UsageError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_consistent_length(*arrays):
    lengths = {len(a) for a in arrays if a is not None}
    if len(lengths) > 1:
        raise UsageError(f"inconsistent sample sizes: {sorted(lengths)}")


def check_is_fitted(estimator, attribute="coef_"):
    """Raise if ``estimator`` has not been fitted yet."""
    if not hasattr(estimator, attribute):
        raise UsageError(
            f"{type(estimator).__name__} instance is not fitted; call fit() first"
        )
