"""Input validation helpers shared by the estimators and data types."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionError, ValidationError


def check_matrix(X, name="X", allow_empty=False, error=DimensionError) -> np.ndarray:
    """2-D finite float64 array; raises ``error`` on any violation."""
    try:
        return check_array(
            X,
            dtype=np.float64,
            ensure_2d=True,
            ensure_min_samples=0 if allow_empty else 1,
            ensure_min_features=0 if allow_empty else 1,
            input_name=name,
        )
    except ValueError as exc:
        raise error(f"{name}: {exc}") from None


def check_vector(x, name="x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains NaN or infinite values")
    return arr


def check_unit_interval(x, name="x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.isfinite(arr).all() or (arr < 0).any() or (arr > 1).any():
        raise ValidationError(f"{name} must lie in [0, 1]")
    return arr


def check_fraction(value, name) -> float:
    if not isinstance(value, numbers.Real) or not 0.0 <= float(value) <= 1.0:
        raise ValidationError(f"{name} must be a real number in [0, 1], got {value!r}")
    return float(value)


def check_choice(value, name, choices):
    if value not in choices:
        raise ValidationError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value
