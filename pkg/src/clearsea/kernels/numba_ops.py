"""Numba-compiled variants of the hot kernels.

Same contracts as ``numpy_ops``.  Compilation is lazy and cached on
disk, so the first call per dtype pays the JIT cost once per machine.
``fastmath`` stays off: the two backends should differ only by float
summation order, not by algebraic rewrites.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def _im2col(x, kh, kw, sh, sw, cols):
    b, c, h, w = x.shape
    hout = (h - kh) // sh + 1
    wout = (w - kw) // sw + 1
    for bc in prange(b * c):
        i = bc // c
        j = bc % c
        for p in range(kh):
            for q in range(kw):
                row = (j * kh + p) * kw + q
                for oy in range(hout):
                    base = oy * wout
                    iy = oy * sh + p
                    for ox in range(wout):
                        cols[i, row, base + ox] = x[i, j, iy, ox * sw + q]


def im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    b, c, h, w = x.shape
    hout = (h - kh) // sh + 1
    wout = (w - kw) // sw + 1
    cols = np.empty((b, c * kh * kw, hout * wout), dtype=x.dtype)
    _im2col(x, kh, kw, sh, sw, cols)
    return cols


@njit(cache=True, parallel=True)
def _col2im(patches, sh, sw, out):
    b, c, h, w = out.shape
    kh = patches.shape[2]
    kw = patches.shape[3]
    hout = patches.shape[4]
    wout = patches.shape[5]
    for bc in prange(b * c):
        i = bc // c
        j = bc % c
        for p in range(kh):
            for q in range(kw):
                for oy in range(hout):
                    iy = oy * sh + p
                    for ox in range(wout):
                        out[i, j, iy, ox * sw + q] += patches[i, j, p, q, oy, ox]


def col2im(
    cols: np.ndarray,
    c: int,
    h: int,
    w: int,
    kh: int,
    kw: int,
    sh: int,
    sw: int,
) -> np.ndarray:
    b = cols.shape[0]
    hout = (h - kh) // sh + 1
    wout = (w - kw) // sw + 1
    patches = np.ascontiguousarray(cols.reshape(b, c, kh, kw, hout, wout))
    out = np.zeros((b, c, h, w), dtype=cols.dtype)
    _col2im(patches, sh, sw, out)
    return out


@njit(cache=True, parallel=True)
def _box_sum_valid(x, win, out):
    b, c, h, w = x.shape
    wout = w - win + 1
    for bc in prange(b * c):
        i = bc // c
        j = bc % c
        # horizontal running sums, then vertical running sums over them
        row = np.empty((h, wout), dtype=np.float64)
        for y in range(h):
            acc = 0.0
            for xx in range(win):
                acc += x[i, j, y, xx]
            row[y, 0] = acc
            for xx in range(1, wout):
                acc += x[i, j, y, xx + win - 1] - x[i, j, y, xx - 1]
                row[y, xx] = acc
        for xx in range(wout):
            acc = 0.0
            for y in range(win):
                acc += row[y, xx]
            out[i, j, 0, xx] = acc
            for y in range(1, h - win + 1):
                acc += row[y + win - 1, xx] - row[y - 1, xx]
                out[i, j, y, xx] = acc


def box_sum_valid(x: np.ndarray, win: int) -> np.ndarray:
    b, c, h, w = x.shape
    if win > h or win > w:
        raise ValueError(f"window {win} exceeds spatial extent {h}x{w}")
    out = np.empty((b, c, h - win + 1, w - win + 1), dtype=np.float64)
    _box_sum_valid(np.ascontiguousarray(x), win, out)
    return out.astype(x.dtype, copy=False)
