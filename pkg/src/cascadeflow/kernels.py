"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set CASCADEFLOW_PURE_PYTHON=1 to force the numpy versions.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("CASCADEFLOW_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py


def build_histogram(bins, rows, grad, hess, n_bins: int) -> np.ndarray:
    """(features, n_bins, 3) sums of gradient, hessian and row count per bin."""
    return _impl.build_histogram(
        np.ascontiguousarray(bins, dtype=np.uint8),
        np.ascontiguousarray(rows, dtype=np.int64),
        np.ascontiguousarray(grad, dtype=np.float64),
        np.ascontiguousarray(hess, dtype=np.float64),
        int(n_bins),
    )


def min_sq_distances(query, ref) -> np.ndarray:
    """Squared L2 distance from each query row to the closest reference row."""
    query = np.ascontiguousarray(query, dtype=np.float64)
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    if query.ndim != 2 or ref.ndim != 2 or query.shape[1] != ref.shape[1]:
        raise ValueError("query and reference must be 2-D with the same width")
    return _impl.min_sq_distances(query, ref)
