"""Small input-validation helpers shared by the public API."""
import math

import numpy as np

from .exceptions import ParameterError


def check_finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    return value


def check_positive(name, value, *, allow_zero=False):
    value = check_finite(name, value)
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ParameterError(f"{name} must be {bound}, got {value!r}")
    return value


def check_interval(name, value, lo, hi):
    value = check_finite(name, value)
    if not lo <= value <= hi:
        raise ParameterError(f"{name} must lie in [{lo}, {hi}], got {value!r}")
    return value


def check_epsilon(epsilon):
    if epsilon not in (1, -1):
        raise ParameterError(f"epsilon must be +1 (call) or -1 (put), got {epsilon!r}")
    return int(epsilon)


def check_power_of_two(name, n, minimum=4):
    n = int(n)
    if n < minimum or n & (n - 1):
        raise ParameterError(f"{name} must be a power of two >= {minimum}, got {n}")
    return n


def as_1d_float(name, values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ParameterError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


def check_square(name, matrix):
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ParameterError(f"{name} must be a square matrix, got shape {mat.shape}")
    return mat
