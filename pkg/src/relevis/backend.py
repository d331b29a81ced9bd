"""Kernel backend selection and shared convolution helpers.

The environment variable RELEVIS_BACKEND chooses the implementation of
the hot kernels at import time:

    RELEVIS_BACKEND=numba   JIT kernels (the default when numba imports)
    RELEVIS_BACKEND=numpy   pure-numpy fallbacks

Both backends expose identical signatures; `benchmarks/bench_kernels.py`
compares their throughput.
"""

import contextlib
import os
import threading

import numpy as np

from .errors import ShapeError

_requested = os.environ.get("RELEVIS_BACKEND", "auto").lower()

if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(f"RELEVIS_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    from . import _kernels_numpy as _impl
    BACKEND = "numpy"
else:
    # the portable threading layer; TBB/OpenMP probing warns on some hosts
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    try:
        from . import _kernels_numba as _impl
        BACKEND = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        from . import _kernels_numpy as _impl
        BACKEND = "numpy"


# the workqueue threading layer aborts the process when parallel kernels
# are launched from two Python threads at once, so launches are gated
_launch_gate = threading.Lock()


def _gate():
    if getattr(_impl, "SERIAL_LAUNCH", False):
        return _launch_gate
    return contextlib.nullcontext()


def pad_same(x, kshape):
    """Zero-pad the three spatial axes of (B, C, X, Y, Z) for 'same' output."""
    KX, KY, KZ = kshape
    B, C, X, Y, Z = x.shape
    xp = np.zeros((B, C, X + KX - 1, Y + KY - 1, Z + KZ - 1), dtype=x.dtype)
    xp[:, :, KX // 2:KX // 2 + X, KY // 2:KY // 2 + Y, KZ // 2:KZ // 2 + Z] = x
    return xp


def conv3d(x, w, b):
    """'Same'-padded correlation of (B, C, X, Y, Z) with (O, C, KX, KY, KZ)."""
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, kernel expects {w.shape[1]}")
    out = np.empty((x.shape[0], w.shape[0]) + x.shape[2:], dtype=x.dtype)
    with _gate():
        _impl.conv3d_forward(pad_same(x, w.shape[2:]), w, b, out)
    return out


def conv3d_transpose(gy, w):
    """Adjoint of conv3d in its input argument.

    Equals a 'same' correlation of gy with the spatially flipped,
    channel-transposed kernel, so the forward kernel is reused.
    """
    wt = np.ascontiguousarray(np.flip(w, axis=(2, 3, 4)).swapaxes(0, 1))
    zero = np.zeros(wt.shape[0], dtype=gy.dtype)
    out = np.empty((gy.shape[0], wt.shape[0]) + gy.shape[2:], dtype=gy.dtype)
    with _gate():
        _impl.conv3d_forward(pad_same(gy, wt.shape[2:]), wt, zero, out)
    return out


def conv3d_grad_weights(x, gy, kshape):
    """Gradient of conv3d with respect to the kernel and bias."""
    gw = np.empty((gy.shape[1], x.shape[1]) + tuple(kshape), dtype=x.dtype)
    with _gate():
        _impl.conv3d_grad_weights(pad_same(x, kshape), np.ascontiguousarray(gy), gw)
    gb = gy.sum(axis=(0, 2, 3, 4))
    return gw, gb


def maxpool3d(x):
    """2x2x2/stride-2 max pool; returns pooled values and winner indices."""
    B, C, X, Y, Z = x.shape
    out = np.empty((B, C, X // 2, Y // 2, Z // 2), dtype=x.dtype)
    win = np.empty(out.shape, dtype=np.int64)
    with _gate():
        _impl.maxpool3d_forward(np.ascontiguousarray(x), out, win)
    return out, win


def maxpool3d_scatter(vals, win, spatial_shape):
    """Place pooled-grid values at their winner voxels, zero elsewhere."""
    B, C = vals.shape[0], vals.shape[1]
    out = np.zeros((B, C) + tuple(spatial_shape), dtype=vals.dtype)
    with _gate():
        _impl.maxpool3d_scatter(np.ascontiguousarray(vals), win, out)
    return out
