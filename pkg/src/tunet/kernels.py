"""Inner loops of the temporal layers.

Each kernel has a numba version and a numpy version with identical results.
``USE_NUMBA`` (from the ``TUNET_NUMBA`` environment flag) picks which one the
public names below dispatch to; both stay importable so they can be compared.

Column layout used by the convolution kernels: ``cols[c * k + j, b * lout + t]``
holds ``x[b, c, t * stride + j]``, so a convolution is one GEMM against the
weights reshaped to ``(out_channels, in_channels * k)``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import USE_NUMBA, njit


@njit(cache=True)
def _im2col_nb(x, k, stride, lout):
    nb, nc, _ = x.shape
    cols = np.empty((nc * k, nb * lout), dtype=x.dtype)
    for c in range(nc):
        for j in range(k):
            row = c * k + j
            for b in range(nb):
                base = b * lout
                # unit stride is split out so the inner loop vectorizes
                if stride == 1:
                    for t in range(lout):
                        cols[row, base + t] = x[b, c, t + j]
                else:
                    for t in range(lout):
                        cols[row, base + t] = x[b, c, t * stride + j]
    return cols


@njit(cache=True)
def _col2im_nb(cols, nb, nc, length, k, stride, lout):
    out = np.zeros((nb, nc, length), dtype=cols.dtype)
    for b in range(nb):
        base = b * lout
        for c in range(nc):
            for j in range(k):
                row = c * k + j
                if stride == 1:
                    for t in range(lout):
                        out[b, c, t + j] += cols[row, base + t]
                else:
                    for t in range(lout):
                        out[b, c, t * stride + j] += cols[row, base + t]
    return out


@njit(cache=True)
def _maxpool_fwd_nb(x, k, stride, lout):
    nb, nc, _ = x.shape
    out = np.empty((nb, nc, lout), dtype=x.dtype)
    idx = np.empty((nb, nc, lout), dtype=np.int64)
    for b in range(nb):
        for c in range(nc):
            for t in range(lout):
                start = t * stride
                best = x[b, c, start]
                arg = start
                for j in range(1, k):
                    v = x[b, c, start + j]
                    if v > best:
                        best = v
                        arg = start + j
                out[b, c, t] = best
                idx[b, c, t] = arg
    return out, idx


@njit(cache=True)
def _maxpool_bwd_nb(g, idx, length):
    nb, nc, lout = g.shape
    gx = np.zeros((nb, nc, length), dtype=g.dtype)
    for b in range(nb):
        for c in range(nc):
            for t in range(lout):
                gx[b, c, idx[b, c, t]] += g[b, c, t]
    return gx


def _im2col_np(x, k, stride, lout):
    nb, nc, _ = x.shape
    win = sliding_window_view(x, k, axis=2)[:, :, : (lout - 1) * stride + 1 : stride]
    # (b, c, t, j) -> (c, j, b, t)
    return np.ascontiguousarray(win.transpose(1, 3, 0, 2)).reshape(nc * k, nb * lout)


def _col2im_np(cols, nb, nc, length, k, stride, lout):
    out = np.zeros((nb, nc, length), dtype=cols.dtype)
    c4 = cols.reshape(nc, k, nb, lout)
    stop = (lout - 1) * stride + 1
    for j in range(k):
        out[:, :, j : j + stop : stride] += c4[:, j].transpose(1, 0, 2)
    return out


def _maxpool_fwd_np(x, k, stride, lout):
    win = sliding_window_view(x, k, axis=2)[:, :, : (lout - 1) * stride + 1 : stride]
    arg = np.argmax(win, axis=3)  # first maximum wins ties
    out = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]
    idx = arg.astype(np.int64) + np.arange(lout, dtype=np.int64) * stride
    return np.ascontiguousarray(out), idx


def _maxpool_bwd_np(g, idx, length):
    nb, nc, lout = g.shape
    gx = np.zeros((nb, nc, length), dtype=g.dtype)
    flat = (np.arange(nb * nc, dtype=np.int64)[:, None] * length + idx.reshape(nb * nc, lout)).ravel()
    np.add.at(gx.reshape(-1), flat, g.ravel())
    return gx


if USE_NUMBA:
    im2col, col2im = _im2col_nb, _col2im_nb
    maxpool_fwd, maxpool_bwd = _maxpool_fwd_nb, _maxpool_bwd_nb
else:
    im2col, col2im = _im2col_np, _col2im_np
    maxpool_fwd, maxpool_bwd = _maxpool_fwd_np, _maxpool_bwd_np

NUMPY_KERNELS = {
    "im2col": _im2col_np,
    "col2im": _col2im_np,
    "maxpool_fwd": _maxpool_fwd_np,
    "maxpool_bwd": _maxpool_bwd_np,
}
NUMBA_KERNELS = {
    "im2col": _im2col_nb,
    "col2im": _col2im_nb,
    "maxpool_fwd": _maxpool_fwd_nb,
    "maxpool_bwd": _maxpool_bwd_nb,
}
