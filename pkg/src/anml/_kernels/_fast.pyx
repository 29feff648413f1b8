# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels.

Mirrors ``pyimpl.py`` operation for operation: same pivot rule, same update
order, same accumulation order, so results are bit-identical to the fallback.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
PIVOT_LIMIT = 3

cdef double _PIVOT_TOL = 1e-9


cdef void _pivot(double[:, ::1] T, long[::1] basis, Py_ssize_t row, Py_ssize_t col) noexcept:
    cdef Py_ssize_t nrows = T.shape[0]
    cdef Py_ssize_t ncols = T.shape[1]
    cdef double piv = T[row, col]
    cdef Py_ssize_t r, j
    cdef double f
    for j in range(ncols):
        T[row, j] /= piv
    for r in range(nrows):
        if r == row:
            continue
        f = T[r, col]
        if f != 0.0:
            for j in range(ncols):
                T[r, j] -= f * T[row, j]
            T[r, col] = 0.0
    basis[row] = col


cdef int _bland_loop(double[:, ::1] T, long[::1] basis, Py_ssize_t ncols, long max_pivots) noexcept:
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t rhs = T.shape[1] - 1
    cdef Py_ssize_t col, row, i, j
    cdef long it
    cdef double best_ratio, ratio, aij
    for it in range(max_pivots):
        col = -1
        for j in range(ncols):
            if T[m, j] < -_PIVOT_TOL:
                col = j
                break
        if col < 0:
            return OPTIMAL
        row = -1
        best_ratio = np.inf
        for i in range(m):
            aij = T[i, col]
            if aij > _PIVOT_TOL:
                ratio = T[i, rhs] / aij
                if row < 0 or ratio < best_ratio or (ratio == best_ratio and basis[i] < basis[row]):
                    best_ratio = ratio
                    row = i
        if row < 0:
            return UNBOUNDED
        _pivot(T, basis, row, col)
    return PIVOT_LIMIT


def simplex_min(A, b, c, max_pivots=0):
    """Two-phase dense simplex with Bland's rule; see pyimpl.simplex_min."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] A_ = np.ascontiguousarray(A, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b_ = np.ascontiguousarray(b, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c_ = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t m = A_.shape[0]
    cdef Py_ssize_t n = A_.shape[1]
    cdef long cap = max_pivots if max_pivots > 0 else 200 + 50 * (m + n)

    cdef cnp.ndarray[cnp.float64_t, ndim=2] T_arr = np.zeros((m + 1, n + m + 1))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] basis_arr = np.zeros(m, dtype=np.int64)
    cdef double[:, ::1] T = T_arr
    cdef long[::1] basis = basis_arr
    cdef Py_ssize_t i, j
    cdef double s, acc

    for i in range(m):
        s = -1.0 if b_[i] < 0.0 else 1.0
        for j in range(n):
            T[i, j] = s * A_[i, j]
        T[i, n + i] = 1.0
        T[i, n + m] = s * b_[i]
        basis[i] = n + i
    for j in range(n):
        acc = 0.0
        for i in range(m):
            acc += T[i, j]
        T[m, j] = -acc
    acc = 0.0
    for i in range(m):
        acc += T[i, n + m]
    T[m, n + m] = -acc

    cdef int status = _bland_loop(T, basis, n + m, cap)
    if status != OPTIMAL:
        return status, np.zeros(n)
    if -T[m, n + m] > 1e-7:
        return INFEASIBLE, np.zeros(n)

    # Drive artificial variables out of the basis; drop redundant rows.
    cdef cnp.ndarray[cnp.npy_bool, ndim=1] keep = np.ones(m, dtype=bool)
    cdef Py_ssize_t col
    for i in range(m):
        if basis[i] >= n:
            col = -1
            for j in range(n):
                if T[i, j] > _PIVOT_TOL or T[i, j] < -_PIVOT_TOL:
                    col = j
                    break
            if col >= 0:
                _pivot(T, basis, i, col)
            else:
                keep[i] = False
    cdef Py_ssize_t m2 = m
    if not np.all(keep):
        T_arr = np.vstack([T_arr[:m][keep], T_arr[m:]])
        basis_arr = basis_arr[keep].copy()
        T = T_arr
        basis = basis_arr
        m2 = basis_arr.shape[0]

    cdef Py_ssize_t rhs = T.shape[1] - 1
    cdef double cb
    for j in range(rhs + 1):
        T[m2, j] = 0.0
    for j in range(n):
        T[m2, j] = c_[j]
    for i in range(m2):
        cb = T[m2, basis[i]]
        if cb != 0.0:
            for j in range(rhs + 1):
                T[m2, j] -= cb * T[i, j]

    status = _bland_loop(T, basis, n, cap)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.zeros(n)
    if status == OPTIMAL or status == UNBOUNDED:
        for i in range(m2):
            if basis[i] < n:
                x[basis[i]] = T[i, rhs]
    return status, x


def knn_vote(sorted_labels, sorted_dists, ks, n_classes):
    """Majority vote with the deterministic tie-break chain; see pyimpl.knn_vote."""
    cdef cnp.ndarray[cnp.int64_t, ndim=2] lab = np.ascontiguousarray(sorted_labels, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dist = np.ascontiguousarray(sorted_dists, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ks_ = np.ascontiguousarray(ks, dtype=np.int64)
    cdef Py_ssize_t n_test = lab.shape[0]
    cdef Py_ssize_t n_k = ks_.shape[0]
    cdef long n_cls = n_classes
    cdef cnp.ndarray[cnp.int64_t, ndim=2] preds = np.zeros((n_test, n_k), dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(n_cls + 1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dsums = np.zeros(n_cls + 1, dtype=np.float64)
    cdef Py_ssize_t t, ki, pos
    cdef long k, lab_j, best, cls

    for t in range(n_test):
        counts[:] = 0
        dsums[:] = 0.0
        pos = 0
        for ki in range(n_k):
            k = ks_[ki]
            while pos < k:
                lab_j = lab[t, pos]
                counts[lab_j] += 1
                dsums[lab_j] += dist[t, pos]
                pos += 1
            best = 0
            for cls in range(1, n_cls + 1):
                if counts[cls] == 0:
                    continue
                if best == 0:
                    best = cls
                    continue
                if counts[cls] > counts[best]:
                    best = cls
                elif counts[cls] == counts[best] and dsums[cls] < dsums[best]:
                    best = cls
            preds[t, ki] = best
    return preds
