"""Dense 4-D float32 tensors and the handful of primitives built on them.

Every image, feature map and gradient in this package is a numpy array of
shape (batch, channels, height, width), dtype float32, C-contiguous.  The
functions here are the only storage-level operations the rest of the code
relies on; everything else is plain numpy.

Tensors are treated as immutable while shared between workers.  The only
in-place operation is :func:`axpy_into`, which requires exclusive access
to its destination.
"""

from __future__ import annotations

import numpy as np

# Anything above this is a mis-parsed shape, not a real allocation request.
_MAX_ELEMENTS = 1 << 48

DTYPE = np.float32


def new_filled(shape: tuple[int, int, int, int], value: float) -> np.ndarray:
    """Allocate a (batch, channels, height, width) tensor filled with `value`."""
    if len(shape) != 4:
        raise ValueError(f"tensor shape must have 4 extents, got {shape!r}")
    if any(int(e) != e or e < 0 for e in shape):
        raise ValueError(f"tensor extents must be non-negative integers, got {shape!r}")
    n = 1
    for e in shape:
        n *= int(e)
    if n > _MAX_ELEMENTS:
        raise ValueError(f"tensor of {n} elements exceeds addressable size")
    return np.full(shape, value, dtype=DTYPE)


def require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def axpy_into(dst: np.ndarray, alpha: float, src: np.ndarray) -> np.ndarray:
    """dst += alpha * src, elementwise and in place.  Returns dst."""
    require_same_shape(dst, src)
    if alpha != 0.0:
        dst += DTYPE(alpha) * src
    return dst


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error over all elements of two same-shape tensors."""
    require_same_shape(a, b)
    if a.size == 0:
        raise ValueError("mse of empty tensors is undefined")
    d = a - b
    return float(np.mean(d * d))
