"""Pure-numpy fallbacks for the JIT kernels.

Signatures mirror _kernels_numba exactly so the two modules are
interchangeable. The convolution is expressed as one matmul per kernel
tap over shifted views of the padded input.
"""

import numpy as np


def conv3d_forward(xp, w, b, out):
    B, O = out.shape[0], out.shape[1]
    X, Y, Z = out.shape[2], out.shape[3], out.shape[4]
    KX, KY, KZ = w.shape[2], w.shape[3], w.shape[4]
    n = X * Y * Z
    acc = np.zeros((B, O, n), dtype=out.dtype)
    for kx in range(KX):
        for ky in range(KY):
            for kz in range(KZ):
                view = xp[:, :, kx:kx + X, ky:ky + Y, kz:kz + Z].reshape(B, -1, n)
                acc += np.matmul(w[:, :, kx, ky, kz], view)
    acc += b[None, :, None]
    out[...] = acc.reshape(out.shape)


def conv3d_grad_weights(xp, gy, gw):
    B, O = gy.shape[0], gy.shape[1]
    X, Y, Z = gy.shape[2], gy.shape[3], gy.shape[4]
    C = gw.shape[1]
    KX, KY, KZ = gw.shape[2], gw.shape[3], gw.shape[4]
    n = X * Y * Z
    gflat = gy.reshape(B, O, n)
    for kx in range(KX):
        for ky in range(KY):
            for kz in range(KZ):
                view = xp[:, :, kx:kx + X, ky:ky + Y, kz:kz + Z].reshape(B, C, n)
                gw[:, :, kx, ky, kz] = np.einsum("bon,bcn->oc", gflat, view)


def maxpool3d_forward(x, out, win):
    B, C = x.shape[0], x.shape[1]
    Y, Z = x.shape[3], x.shape[4]
    PX, PY, PZ = out.shape[2], out.shape[3], out.shape[4]
    cand = np.empty((8,) + out.shape, dtype=x.dtype)
    idx = np.empty((8,) + out.shape[2:], dtype=win.dtype)
    xs = np.arange(PX) * 2
    ys = np.arange(PY) * 2
    zs = np.arange(PZ) * 2
    k = 0
    for dx in range(2):
        for dy in range(2):
            for dz in range(2):
                cand[k] = x[:, :, dx:2 * PX + dx:2, dy:2 * PY + dy:2, dz:2 * PZ + dz:2]
                idx[k] = (((xs + dx)[:, None, None] * Y + (ys + dy)[None, :, None]) * Z
                          + (zs + dz)[None, None, :])
                k += 1
    # candidates are ordered by ascending flat index, so argmax's
    # first-occurrence rule resolves ties to the lowest index
    pick = np.argmax(cand, axis=0)
    out[...] = np.take_along_axis(cand, pick[None], axis=0)[0]
    win[...] = idx[pick, np.arange(PX)[:, None, None], np.arange(PY)[None, :, None],
                   np.arange(PZ)[None, None, :]]


def maxpool3d_scatter(vals, win, out):
    B, C = vals.shape[0], vals.shape[1]
    flat = out.reshape(B, C, -1)
    bi = np.arange(B)[:, None, None]
    ci = np.arange(C)[None, :, None]
    flat[bi, ci, win.reshape(B, C, -1)] = vals.reshape(B, C, -1)
