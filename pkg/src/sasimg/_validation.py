"""Input validation helpers shared by the estimators and operations."""

import numbers

import numpy as np


class ValidationError(ValueError):
    """Raised when an input or configuration value violates an invariant.

    The ``key`` attribute names the offending parameter so callers (and the
    CLI) can report it in machine-parseable form.
    """

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


def check_positive(value, key, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValidationError(key, f"must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValidationError(key, f"must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ValidationError(key, f"must be >= 0, got {value!r}")
    return float(value)


def check_open_unit(value, key, what="value"):
    if not isinstance(value, numbers.Real) or not (0.0 < value < 1.0):
        raise ValidationError(key, f"{what} must lie in (0,1), got {value!r}")
    return float(value)


def check_int(value, key, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValidationError(key, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(key, f"must be >= {minimum}, got {value!r}")
    return int(value)


def check_vector3(value, key="vector"):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ValidationError(key, f"expected a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(key, "must be finite")
    return arr


def check_complex_2d(x, key="samples"):
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ValidationError(key, f"expected (channels, samples), got shape {arr.shape}")
    if not np.iscomplexobj(arr):
        arr = arr.astype(np.complex128)
    return arr


def check_finite(x, key="array"):
    arr = np.asarray(x)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(key, "contains non-finite values")
    return arr
