"""Small input-validation helpers shared across modules."""

import numpy as np

from .exceptions import DimensionMismatch, InvalidArgument, LengthMismatch


def as_matrix(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidArgument(f"{name} must be a 2-d array, got ndim={X.ndim}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgument(f"{name} contains NaN or Inf entries")
    return X


def as_vector(v, name="v", length=None):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise InvalidArgument(f"{name} must be a 1-d array, got ndim={v.ndim}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgument(f"{name} contains NaN or Inf entries")
    if length is not None and v.shape[0] != length:
        raise LengthMismatch(f"{name} has length {v.shape[0]}, expected {length}")
    return v


def as_labels(z, n_classes, name="labels", length=None):
    """Validate a 1-based label vector with values in {1, ..., n_classes}."""
    z = np.asarray(z)
    if z.ndim != 1:
        raise InvalidArgument(f"{name} must be a 1-d array")
    if not np.issubdtype(z.dtype, np.integer):
        zf = np.asarray(z, dtype=float)
        if not np.all(zf == np.round(zf)):
            raise InvalidArgument(f"{name} must contain integers")
        z = zf.astype(int)
    z = z.astype(int)
    if z.size and (z.min() < 1 or z.max() > n_classes):
        raise InvalidArgument(
            f"{name} must lie in 1..{n_classes}, got range [{z.min()}, {z.max()}]"
        )
    if length is not None and z.shape[0] != length:
        raise LengthMismatch(f"{name} has length {z.shape[0]}, expected {length}")
    return z


def check_same_rows(n, *arrays_names):
    for arr, name in arrays_names:
        if arr is not None and arr.shape[0] != n:
            raise DimensionMismatch(
                f"{name} has {arr.shape[0]} rows, expected {n}"
            )


def positive_int(value, name):
    if int(value) != value or value < 1:
        raise InvalidArgument(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def readonly(arr):
    """Return a read-only float copy; domain objects are immutable by contract."""
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def readonly_int(arr):
    out = np.array(arr, dtype=int, copy=True)
    out.setflags(write=False)
    return out
