"""Tensors are plain C-contiguous numpy arrays.

Activations and weights are stored as float32 in channels-first (C, H, W)
row-major order. Kernels accept float64 too, which the gradient checks use.
"""

import math

import numpy as np

from .errors import ShapeMismatch

FLOAT_TYPES = (np.float32, np.float64)


def as_tensor(data, shape=None, dtype=np.float32):
    """Build a contiguous tensor, optionally reshaping a flat buffer."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    if shape is not None:
        arr = reshape(arr, shape)
    if arr.ndim == 0 or min(arr.shape) < 1:
        raise ShapeMismatch(f"tensor extents must all be >= 1, got {arr.shape}")
    return arr


def float_dtype(*arrays):
    """float64 if any input is float64, float32 otherwise."""
    if any(np.asarray(a).dtype == np.float64 for a in arrays):
        return np.float64
    return np.float32


def reshape(t, new_shape):
    new_shape = tuple(int(s) for s in new_shape)
    if math.prod(new_shape) != t.size:
        raise ShapeMismatch(f"cannot reshape {t.shape} into {new_shape}")
    return np.ascontiguousarray(t).reshape(new_shape)


def flatten(t):
    return np.ascontiguousarray(t).reshape(-1)


def flat_index(shape, index):
    """Row-major linear index of a multi-index, e.g. c*H*W + h*W + w."""
    linear = 0
    for extent, i in zip(shape, index):
        linear = linear * extent + i
    return linear


def add(a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: shapes {a.shape} and {b.shape} differ")
    return np.add(a, b, dtype=float_dtype(a, b))


def relu(t):
    return np.maximum(t, 0).astype(t.dtype, copy=False)
