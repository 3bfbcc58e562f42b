"""Small input-validation helpers shared by the estimators and the analysis code.

These mirror the role of ``sklearn.utils.validation`` but accept complex
arrays, which scikit-learn refuses.
"""
import numbers

import numpy as np


class ParameterError(ValueError):
    """Raised when a scalar parameter violates its documented range."""


class NotFittedError(RuntimeError):
    """Raised when ``predict`` is called before ``fit``."""


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``.

    ``None`` gives a fresh generator, an int (or ``SeedSequence``) seeds a new
    one and an existing ``Generator`` is passed through untouched.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a numpy Generator")


def check_positive(value, name, strict=True):
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise ParameterError(f"{name} must be {bound}, got {value!r}")
    return value


def check_interval(value, name, low, high, low_closed=True, high_closed=True):
    ok_low = value >= low if low_closed else value > low
    ok_high = value <= high if high_closed else value < high
    if not (np.isfinite(value) and ok_low and ok_high):
        lb = "[" if low_closed else "("
        hb = "]" if high_closed else ")"
        raise ParameterError(f"{name} must lie in {lb}{low}, {high}{hb}, got {value!r}")
    return value


def check_complex_array(x, name="array", ndim=None, shape=None):
    """Return ``x`` as a complex128 array, validating its rank and shape."""
    arr = np.asarray(x)
    if not (np.issubdtype(arr.dtype, np.number) or arr.dtype == bool):
        raise ValueError(f"{name} must be numeric, got dtype {arr.dtype}")
    arr = arr.astype(np.complex128, copy=False)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if shape is not None:
        for axis, (got, want) in enumerate(zip(arr.shape, shape)):
            if want is not None and got != want:
                raise ValueError(
                    f"{name} has size {got} along axis {axis}, expected {want}"
                )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return arr


def check_is_fitted(estimator, attributes):
    if isinstance(attributes, str):
        attributes = [attributes]
    if not all(hasattr(estimator, attr) for attr in attributes):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; call fit first."
        )
