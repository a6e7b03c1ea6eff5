"""Input validation helpers shared across the package.

All public entry points funnel array inputs through these checks so the
numerical core can assume float64, finite values and consistent shapes.
"""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def as_float_array(x, name: str = "x") -> np.ndarray:
    """Coerce to a float64 ndarray and reject NaN/Inf."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def as_vector(x, name: str = "x", length: int | None = None) -> np.ndarray:
    """Coerce to a finite 1-D float64 array, optionally of fixed length."""
    arr = as_float_array(x, name)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValidationError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def as_matrix(x, name: str = "X", n_cols: int | None = None) -> np.ndarray:
    """Coerce to a finite 2-D float64 array, optionally with fixed column count."""
    arr = as_float_array(x, name)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise ValidationError(
            f"{name} must have {n_cols} columns, got {arr.shape[1]}"
        )
    return arr


def check_unit_box(x: np.ndarray, name: str = "x", tol: float = 0.0) -> None:
    """Require every entry of ``x`` to lie in [0, 1] (within ``tol``)."""
    if x.size and (x.min() < -tol or x.max() > 1.0 + tol):
        raise ValidationError(
            f"{name} must lie in [0, 1]; range is [{x.min():g}, {x.max():g}]"
        )


def check_labels(y, num_classes: int, name: str = "y") -> np.ndarray:
    """Coerce labels to int64 and require 0 <= y < num_classes."""
    arr = np.asarray(y)
    if arr.ndim == 0:
        arr = arr[None]
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise ValidationError(f"{name} must contain integer class indices")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
        raise ValidationError(
            f"{name} must lie in [0, {num_classes}); range is "
            f"[{arr.min()}, {arr.max()}]"
        )
    return arr


def check_class_index(t: int, num_classes: int, name: str = "t") -> int:
    """Require a single class index in [0, num_classes)."""
    t = int(t)
    if not 0 <= t < num_classes:
        raise ValidationError(f"{name}={t} out of range [0, {num_classes})")
    return t


def check_interval(value: float, lo: float, hi: float, name: str) -> float:
    value = float(value)
    if not lo <= value <= hi:
        raise ValidationError(f"{name}={value} must be in [{lo}, {hi}]")
    return value


def check_positive(value: float, name: str, strict: bool = True) -> float:
    value = float(value)
    if strict and value <= 0:
        raise ValidationError(f"{name}={value} must be > 0")
    if not strict and value < 0:
        raise ValidationError(f"{name}={value} must be >= 0")
    return value
