"""Pure numpy implementations of the hot kernels.

Signatures mirror the compiled ``_kernels`` module exactly; ``mcvl._backend``
picks one of the two at import time.
"""

import numpy as np


def sift_bin(w_lo, w_hi, b_lo, tab, spacing):
    """Accumulate gradient votes into 4x4x8 histograms on a dense grid.

    ``w_lo``/``w_hi`` hold each pixel's magnitude split between orientation bin
    ``b_lo`` and ``(b_lo + 1) % 8``.  ``tab[j, p]`` is the combined window and
    spatial-bin weight of region offset ``p`` for cell ``j``.  Uses the fact that
    the 2-D weights are separable: one banded matrix product per axis.
    """
    H, W = w_lo.shape
    width = tab.shape[1]
    gx = np.arange(0, W - width + 1, spacing)
    gy = np.arange(0, H - width + 1, spacing)
    nx, ny = len(gx), len(gy)

    chans = np.zeros((8, H, W))
    b_hi = (b_lo + 1) % 8
    rows, cols = np.indices((H, W))
    np.add.at(chans, (b_lo, rows, cols), w_lo)
    np.add.at(chans, (b_hi, rows, cols), w_hi)

    def band(n_pix, starts):
        K = np.zeros((4, n_pix, len(starts)))
        for g, s in enumerate(starts):
            K[:, s:s + width, g] = tab
        return K

    Kx = band(W, gx).transpose(1, 0, 2).reshape(W, 4 * nx)  # (W, 4*nx)
    Ky = band(H, gy).transpose(1, 0, 2).reshape(H, 4 * ny)  # (H, 4*ny)
    A = chans @ Kx  # (8, H, 4*nx)
    B = np.einsum("hk,ohl->okl", Ky, A, optimize=True)  # (8, 4*ny, 4*nx)
    B = B.reshape(8, 4, ny, 4, nx)  # o, i, gy, j, gx
    return np.ascontiguousarray(B.transpose(2, 4, 1, 3, 0).reshape(ny * nx, 128))


def vlad_aggregate(X, centers, dots):
    """Sum of residuals per nearest center.

    ``dots`` is ``X @ centers.T``; nearest center minimises
    ``|c|^2 - 2 x.c`` with ties resolved to the lowest index.
    """
    K, d = centers.shape
    out = np.zeros((K, d))
    if len(X) == 0:
        return out.ravel(), np.zeros(0, dtype=np.intp)
    score = (centers * centers).sum(1)[None, :] - 2.0 * dots
    assign = np.argmin(score, axis=1)
    order = np.argsort(assign, kind="stable")
    sa = assign[order]
    starts = np.flatnonzero(np.r_[True, sa[1:] != sa[:-1]])
    sums = np.add.reduceat(X[order], starts, axis=0)
    counts = np.diff(np.r_[starts, len(sa)])
    words = sa[starts]
    out[words] = sums - counts[:, None] * centers[words]
    return out.ravel(), assign


def sus_indices(weights, u0):
    """Stochastic universal sampling: indices selected by pointers ``u0 + k/N``."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    c = np.cumsum(w)
    ptr = u0 + np.arange(n) / n
    idx = np.searchsorted(c, ptr, side="right")
    return np.minimum(idx, n - 1)
