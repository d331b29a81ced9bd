"""JIT-compiled hot kernels: 3D convolution and 2x2x2 max pooling.

All kernels take pre-padded inputs where padding is needed so the inner
loops run without bounds checks. Each output element is written by
exactly one loop iteration, which keeps results deterministic under
parallel execution.
"""

import numpy as np
from numba import njit, prange

# the workqueue threading layer cannot take concurrent launches
SERIAL_LAUNCH = True


@njit(parallel=True, fastmath=True, cache=True)
def conv3d_forward(xp, w, b, out):
    """Correlate a zero-padded input with a kernel bank.

    xp:  (B, C, X+KX-1, Y+KY-1, Z+KZ-1) padded input
    w:   (O, C, KX, KY, KZ)
    b:   (O,)
    out: (B, O, X, Y, Z) written in place
    """
    B, O = out.shape[0], out.shape[1]
    X, Y, Z = out.shape[2], out.shape[3], out.shape[4]
    C = w.shape[1]
    KX, KY, KZ = w.shape[2], w.shape[3], w.shape[4]
    for bo in prange(B * O):
        bi = bo // O
        o = bo - bi * O
        row = np.empty(Z, dtype=out.dtype)
        for xx in range(X):
            for yy in range(Y):
                for zz in range(Z):
                    row[zz] = b[o]
                for c in range(C):
                    for kx in range(KX):
                        for ky in range(KY):
                            xrow = xp[bi, c, xx + kx, yy + ky]
                            for kz in range(KZ):
                                wv = w[o, c, kx, ky, kz]
                                for zz in range(Z):
                                    row[zz] += wv * xrow[zz + kz]
                for zz in range(Z):
                    out[bi, o, xx, yy, zz] = row[zz]


@njit(parallel=True, fastmath=True, cache=True)
def conv3d_grad_weights(xp, gy, gw):
    """Accumulate kernel gradients from a padded input and output gradient.

    xp: (B, C, X+KX-1, ...) padded forward input
    gy: (B, O, X, Y, Z) gradient at the convolution output
    gw: (O, C, KX, KY, KZ) written in place
    """
    B, O = gy.shape[0], gy.shape[1]
    X, Y, Z = gy.shape[2], gy.shape[3], gy.shape[4]
    C = gw.shape[1]
    KX, KY, KZ = gw.shape[2], gw.shape[3], gw.shape[4]
    for oc in prange(O * C):
        o = oc // C
        c = oc - o * C
        for kx in range(KX):
            for ky in range(KY):
                for kz in range(KZ):
                    acc = 0.0
                    for bi in range(B):
                        for xx in range(X):
                            for yy in range(Y):
                                grow = gy[bi, o, xx, yy]
                                xrow = xp[bi, c, xx + kx, yy + ky]
                                for zz in range(Z):
                                    acc += grow[zz] * xrow[zz + kz]
                    gw[o, c, kx, ky, kz] = acc


@njit(parallel=True, cache=True)
def maxpool3d_forward(x, out, win):
    """2x2x2 max pooling with stride 2; odd trailing planes are dropped.

    x:   (B, C, X, Y, Z)
    out: (B, C, X//2, Y//2, Z//2) written in place
    win: same shape as out; flat spatial index of each winner within x,
         ties resolved to the lowest index
    """
    B, C = x.shape[0], x.shape[1]
    Y, Z = x.shape[3], x.shape[4]
    PX, PY, PZ = out.shape[2], out.shape[3], out.shape[4]
    for bc in prange(B * C):
        bi = bc // C
        c = bc - bi * C
        for px in range(PX):
            for py in range(PY):
                for pz in range(PZ):
                    best = x[bi, c, 2 * px, 2 * py, 2 * pz]
                    bidx = (2 * px * Y + 2 * py) * Z + 2 * pz
                    for dx in range(2):
                        for dy in range(2):
                            for dz in range(2):
                                v = x[bi, c, 2 * px + dx, 2 * py + dy, 2 * pz + dz]
                                if v > best:
                                    best = v
                                    bidx = ((2 * px + dx) * Y + (2 * py + dy)) * Z + 2 * pz + dz
                    out[bi, c, px, py, pz] = best
                    win[bi, c, px, py, pz] = bidx


@njit(parallel=True, cache=True)
def maxpool3d_scatter(vals, win, out):
    """Scatter pooled-grid values back onto the winner voxels.

    vals: (B, C, PX, PY, PZ) values to place
    win:  winner flat indices as produced by maxpool3d_forward
    out:  (B, C, X, Y, Z) pre-zeroed destination, written in place
    """
    B, C = vals.shape[0], vals.shape[1]
    PX, PY, PZ = vals.shape[2], vals.shape[3], vals.shape[4]
    Y, Z = out.shape[3], out.shape[4]
    for bc in prange(B * C):
        bi = bc // C
        c = bc - bi * C
        flat = out[bi, c].reshape(out.shape[2] * Y * Z)
        for px in range(PX):
            for py in range(PY):
                for pz in range(PZ):
                    flat[win[bi, c, px, py, pz]] = vals[bi, c, px, py, pz]
