"""Small input-validation helpers used throughout the package."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, NonSimplexError

ROW_SUM_TOL = 1e-12
SIMPLEX_TOL = 1e-9


def as_point(xy, name="point"):
    """Coerce a 2-sequence into an (x, y) float tuple."""
    try:
        x, y = xy
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a pair of coordinates, got {xy!r}")
    x, y = float(x), float(y)
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ConfigError(f"{name} has non-finite coordinates: {xy!r}")
    return (x, y)


def check_positive(value, name):
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ConfigError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_nonnegative(value, name):
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise ConfigError(f"{name} must be a nonnegative finite number, got {value!r}")
    return value


def check_unit_interval(value, name, *, open_left=False, open_right=False):
    value = float(value)
    lo_ok = value > 0.0 if open_left else value >= 0.0
    hi_ok = value < 1.0 if open_right else value <= 1.0
    if not (np.isfinite(value) and lo_ok and hi_ok):
        lo = "(" if open_left else "["
        hi = ")" if open_right else "]"
        raise ConfigError(f"{name} must lie in {lo}0, 1{hi}, got {value!r}")
    return value


def check_row_stochastic(matrix, name="transition", tol=ROW_SUM_TOL):
    """Validate a square matrix with rows on the probability simplex.

    Returns the matrix as a read-only float array.
    """
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigError(f"{name} must be square, got shape {mat.shape}")
    if mat.shape[0] == 0:
        raise ConfigError(f"{name} must be non-empty")
    if not np.all(np.isfinite(mat)):
        raise ConfigError(f"{name} has non-finite entries")
    if np.any(mat < 0.0) or np.any(mat > 1.0):
        raise ConfigError(f"{name} has entries outside [0, 1]")
    sums = mat.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > tol)[0]
    if bad.size:
        raise ConfigError(
            f"{name} row {bad[0]} sums to {sums[bad[0]]!r}, expected 1 within {tol}"
        )
    mat = mat.copy()
    mat.setflags(write=False)
    return mat


def check_simplex(vector, name="strategy", tol=SIMPLEX_TOL):
    """Validate a probability vector; returns it as a read-only float array."""
    vec = np.asarray(vector, dtype=float)
    if vec.ndim != 1 or vec.size == 0:
        raise NonSimplexError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(vec)):
        raise NonSimplexError(f"{name} has non-finite entries")
    if np.any(vec < -tol):
        raise NonSimplexError(f"{name} has negative probability {vec.min()!r}")
    total = float(vec.sum())
    if abs(total - 1.0) > tol:
        raise NonSimplexError(f"{name} sums to {total!r}, expected 1 within {tol}")
    vec = np.clip(vec, 0.0, None)
    vec = vec / vec.sum()
    vec.setflags(write=False)
    return vec


def readonly(array):
    """Return a read-only float ndarray copy of the input."""
    arr = np.array(array, dtype=float)
    arr.setflags(write=False)
    return arr
