"""Pure-numpy implementations of the hot kernels.

These are the import-time fallback for the compiled extension in
``_kernels.pyx``.  Both backends perform the same floating-point
operations in the same order, so their outputs are bit-identical; the
equivalence is asserted in the test suite.  Keep the two files in sync.
"""

from __future__ import annotations

import numpy as np

_INF = np.inf


def corr1d_valid(a: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    """Valid-mode 1-D correlation of a 2-D array along ``axis``.

    out[i, j] = sum_t k[t] * a[i, j + t] (axis=1), taps accumulated in
    ascending order.
    """
    taps = k.shape[0]
    if axis == 0:
        n = a.shape[0] - taps + 1
        out = np.zeros((n, a.shape[1]), dtype=np.float64)
        for t in range(taps):
            out += k[t] * a[t:t + n, :]
    else:
        n = a.shape[1] - taps + 1
        out = np.zeros((a.shape[0], n), dtype=np.float64)
        for t in range(taps):
            out += k[t] * a[:, t:t + n]
    return out


def assignment_min(cost: np.ndarray):
    """Exact minimum-cost assignment via shortest augmenting paths.

    Jonker-Volgenant-style O(n^3): one Dijkstra pass per row over reduced
    costs, maintaining dual potentials.  Returns (col_for_row, u, v) where
    u[i] + v[j] <= cost[i, j] for all pairs with equality on matched ones.

    Index 0 of the internal arrays is a virtual column; real columns are
    1..n.  The column scan takes the first (lowest-index) minimum, which
    the compiled twin reproduces with a strict ``<`` comparison.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1, dtype=np.float64)
    v = np.zeros(n + 1, dtype=np.float64)
    p = np.zeros(n + 1, dtype=np.int64)      # p[j]: row matched to column j, 0 = none
    way = np.zeros(n + 1, dtype=np.int64)

    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, _INF, dtype=np.float64)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            sub = minv[1:]
            better = free[1:] & (cur < sub)
            sub[better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free[1:], sub, _INF)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    col_for_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_for_row[p[j] - 1] = j - 1
    return col_for_row, u[1:].copy(), v[1:].copy()
