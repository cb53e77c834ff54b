"""Pure-numpy implementations of the hot array kernels.

These are the reference implementations: the numba variants in
``numba_ops.py`` must produce the same values (up to float summation
order) for every input shape the network uses.  All kernels operate on
``(B, C, H, W)`` arrays and never modify their inputs.
"""
from __future__ import annotations

import numpy as np


def im2col(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """Unfold sliding ``kh x kw`` patches of ``x`` into a matmul-ready matrix.

    Parameters
    ----------
    x : (B, C, H, W) float array, already padded by the caller.
    kh, kw : patch height and width.
    sh, sw : vertical and horizontal stride.

    Returns
    -------
    (B, C*kh*kw, L) array with L = Hout*Wout, column index varying
    fastest over width.  Row index is ``(c*kh + p)*kw + q`` so a weight
    tensor reshaped from ``(Cout, C, kh, kw)`` multiplies it directly.
    """
    b, c, h, w = x.shape
    hout = (h - kh) // sh + 1
    wout = (w - kw) // sw + 1
    cols = np.empty((b, c, kh, kw, hout, wout), dtype=x.dtype)
    for p in range(kh):
        for q in range(kw):
            cols[:, :, p, q] = x[:, :, p : p + sh * hout : sh, q : q + sw * wout : sw]
    return cols.reshape(b, c * kh * kw, hout * wout)


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
    """Adjoint of :func:`im2col`: scatter-add patch columns back to an image.

    ``cols`` is ``(B, C*kh*kw, L)``; returns ``(B, C, H, W)`` where every
    source pixel accumulates the contributions of all patches covering it.
    """
    b = cols.shape[0]
    hout = (h - kh) // sh + 1
    wout = (w - kw) // sw + 1
    patches = cols.reshape(b, c, kh, kw, hout, wout)
    out = np.zeros((b, c, h, w), dtype=cols.dtype)
    for p in range(kh):
        for q in range(kw):
            out[:, :, p : p + sh * hout : sh, q : q + sw * wout : sw] += patches[:, :, p, q]
    return out


def box_sum_valid(x: np.ndarray, win: int) -> np.ndarray:
    """Sum of every valid ``win x win`` window over the last two axes.

    Input ``(B, C, H, W)``, output ``(B, C, H-win+1, W-win+1)``.  Uses an
    integral image, so it costs O(N) regardless of window size.
    """
    b, c, h, w = x.shape
    if win > h or win > w:
        raise ValueError(f"window {win} exceeds spatial extent {h}x{w}")
    s = np.zeros((b, c, h + 1, w + 1), dtype=np.float64)
    s[:, :, 1:, 1:] = x
    np.cumsum(s, axis=2, out=s)
    np.cumsum(s, axis=3, out=s)
    out = (
        s[:, :, win:, win:]
        - s[:, :, :-win, win:]
        - s[:, :, win:, :-win]
        + s[:, :, :-win, :-win]
    )
    return out.astype(x.dtype, copy=False)
