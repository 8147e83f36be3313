"""Input validation helpers shared by the domain types and estimators."""

from __future__ import annotations

import numbers

import numpy as np

PROB_SUM_TOL = 1e-9


def as_float_array(value, name: str, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Coerce to a read-only float64 array, optionally enforcing a shape."""
    arr = np.asarray(value, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


def check_finite_scalar(value, name: str) -> float:
    if not isinstance(value, numbers.Real):
        raise ValueError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    return value


def check_probability(value, name: str) -> float:
    value = check_finite_scalar(value, name)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return value


def check_positive(value, name: str) -> float:
    value = check_finite_scalar(value, name)
    if value <= 0.0:
        raise ValueError(f"{name} must be > 0, got {value}")
    return value


def check_non_negative(value, name: str) -> float:
    value = check_finite_scalar(value, name)
    if value < 0.0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value


def check_unit_sum(probs, name: str, tol: float = PROB_SUM_TOL) -> None:
    total = float(np.sum(np.asarray(probs, dtype=np.float64)))
    if abs(total - 1.0) > tol:
        raise ValueError(f"{name} must sum to 1 within {tol}, got {total!r}")


def check_displacement_power(r) -> float:
    """The exponent applied to the Mahalanobis form; 2 is Gaussian."""
    r = check_finite_scalar(r, "r")
    if not 0.0 < r <= 2.0:
        raise ValueError(f"r must be in (0, 2], got {r}")
    return r
