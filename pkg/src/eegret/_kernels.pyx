# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: valid-mode separable correlation and the
assignment solver.  Mirrors ``kernels_py`` operation-for-operation so both
backends return bit-identical floats; keep the two files in sync.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def corr1d_valid(double[:, ::1] a, double[::1] k, int axis):
    cdef Py_ssize_t rows = a.shape[0], cols = a.shape[1]
    cdef Py_ssize_t taps = k.shape[0]
    cdef Py_ssize_t i, j, t, n
    cdef double acc
    cdef double[:, ::1] out
    if axis == 0:
        n = rows - taps + 1
        out_arr = np.zeros((n, cols), dtype=np.float64)
        out = out_arr
        for i in range(n):
            for j in range(cols):
                acc = 0.0
                for t in range(taps):
                    acc += k[t] * a[i + t, j]
                out[i, j] = acc
    else:
        n = cols - taps + 1
        out_arr = np.zeros((rows, n), dtype=np.float64)
        out = out_arr
        for i in range(rows):
            for j in range(n):
                acc = 0.0
                for t in range(taps):
                    acc += k[t] * a[i, j + t]
                out[i, j] = acc
    return out_arr


def assignment_min(double[:, ::1] cost):
    """Shortest-augmenting-path assignment; see kernels_py.assignment_min.

    The column scan folds the delta/argmin selection into the update pass;
    with a strict ``<`` this picks the first minimum, matching the numpy
    twin's first-occurrence argmin.
    """
    cdef Py_ssize_t n = cost.shape[0]
    u_arr = np.zeros(n + 1, dtype=np.float64)
    v_arr = np.zeros(n + 1, dtype=np.float64)
    p_arr = np.zeros(n + 1, dtype=np.int64)
    way_arr = np.zeros(n + 1, dtype=np.int64)
    minv_arr = np.empty(n + 1, dtype=np.float64)
    used_arr = np.zeros(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, minv = minv_arr
    cdef long long[::1] p = p_arr, way = way_arr
    cdef unsigned char[::1] used = used_arr
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double cur, delta
    cdef double INF = np.inf

    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INF
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INF
            j1 = -1
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    col_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] col_for_row = col_arr
    for j in range(1, n + 1):
        col_for_row[p[j] - 1] = j - 1
    return col_arr, u_arr[1:].copy(), v_arr[1:].copy()
