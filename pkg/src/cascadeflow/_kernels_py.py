"""Numpy versions of the compiled kernels, used when the extension is not built."""
from __future__ import annotations

import numpy as np

DIST_CHUNK = 1 << 22  # query rows x reference rows x features held at once


def build_histogram(bins: np.ndarray, rows: np.ndarray, grad: np.ndarray, hess: np.ndarray,
                    n_bins: int) -> np.ndarray:
    n_feat = bins.shape[1]
    out = np.zeros((n_feat, n_bins, 3))
    sub = bins[rows]
    g = grad[rows]
    h = hess[rows]
    for f in range(n_feat):
        col = sub[:, f]
        out[f, :, 0] = np.bincount(col, weights=g, minlength=n_bins)
        out[f, :, 1] = np.bincount(col, weights=h, minlength=n_bins)
        out[f, :, 2] = np.bincount(col, minlength=n_bins)
    return out


def min_sq_distances(query: np.ndarray, ref: np.ndarray) -> np.ndarray:
    m, d = query.shape
    n = ref.shape[0]
    out = np.full(m, np.inf)
    if n == 0:
        return out
    step = max(1, DIST_CHUNK // max(1, n * d))
    for a in range(0, m, step):
        q = query[a:a + step]
        # sequential accumulation over features keeps results equal to the compiled loop
        acc = np.zeros((q.shape[0], n))
        for k in range(d):
            diff = q[:, k, None] - ref[None, :, k]
            acc += diff * diff
        out[a:a + step] = acc.min(axis=1)
    return out
