"""Kernel dispatch: compiled extension when available, numpy otherwise.

The public functions validate and coerce inputs, then delegate to the
selected backend.  Both backends are bit-identical by construction, so
which one is active never changes any result, only speed.
"""

from __future__ import annotations

import numpy as np

from . import kernels_py
from .errors import ParameterError, ShapeError

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None

_backend = _compiled if _compiled is not None else kernels_py

HAVE_COMPILED = _compiled is not None
BACKEND_NAME = "compiled" if HAVE_COMPILED else "numpy"


def _as_f64_2d(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got ndim={a.ndim}")
    return a


def corr1d_valid(a, k, axis: int, backend=None) -> np.ndarray:
    """Valid-mode correlation of 2-D ``a`` with 1-D tap vector ``k``."""
    a = _as_f64_2d(a)
    k = np.ascontiguousarray(k, dtype=np.float64)
    if k.ndim != 1 or k.size == 0:
        raise ParameterError("kernel must be a non-empty 1-D vector")
    if axis not in (0, 1):
        raise ParameterError(f"axis must be 0 or 1, got {axis}")
    if a.shape[axis] < k.size:
        raise ShapeError(
            f"array extent {a.shape[axis]} along axis {axis} shorter than kernel ({k.size})")
    impl = backend if backend is not None else _backend
    return impl.corr1d_valid(a, k, axis)


def assignment_min(cost, backend=None):
    """Exact min-cost assignment of a square finite matrix.

    Returns (col_for_row, u, v): the optimal column per row and the dual
    potentials (u[i] + v[j] <= cost[i, j], tight on matched pairs).
    """
    cost = _as_f64_2d(cost)
    if cost.shape[0] != cost.shape[1]:
        raise ParameterError(f"assignment needs a square matrix, got {cost.shape}")
    if cost.shape[0] == 0:
        return np.empty(0, dtype=np.int64), np.empty(0), np.empty(0)
    if not np.isfinite(cost).all():
        raise ParameterError("assignment matrix must be finite")
    impl = backend if backend is not None else _backend
    return impl.assignment_min(cost)
