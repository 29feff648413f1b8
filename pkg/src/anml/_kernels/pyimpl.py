"""Pure-numpy reference implementations of the hot kernels.

The compiled extension in ``_fast.pyx`` mirrors these routines operation for
operation so both backends return bit-identical results; keep any change in
lockstep with the Cython source.
"""

import numpy as np

# simplex_min status codes
OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
PIVOT_LIMIT = 3

_PIVOT_TOL = 1e-9


def _pivot(T, basis, row, col):
    piv = T[row, col]
    T[row] /= piv
    for r in range(T.shape[0]):
        if r == row:
            continue
        f = T[r, col]
        if f != 0.0:
            T[r] -= f * T[row]
            T[r, col] = 0.0
    basis[row] = col


def _bland_loop(T, basis, ncols, max_pivots):
    """Run Bland's-rule pivoting on the tableau until optimal.

    The cost row is the last row of T; the rhs is the last column.
    Returns OPTIMAL, UNBOUNDED or PIVOT_LIMIT.
    """
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    for _ in range(max_pivots):
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
                if row < 0 or ratio < best_ratio or (
                    ratio == best_ratio and basis[i] < basis[row]
                ):
                    best_ratio = ratio
                    row = i
        if row < 0:
            return UNBOUNDED
        _pivot(T, basis, row, col)
    return PIVOT_LIMIT


def simplex_min(A, b, c, max_pivots=0):
    """Solve ``min c.x  s.t.  A x = b, x >= 0`` by the two-phase dense simplex.

    Bland's rule everywhere, so the iteration is finite and fully
    deterministic.  Returns ``(status, x)``.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    m, n = A.shape
    if max_pivots <= 0:
        max_pivots = 200 + 50 * (m + n)

    # Phase-1 tableau: [A | I | b] with b flipped nonnegative, artificial basis.
    T = np.zeros((m + 1, n + m + 1))
    for i in range(m):
        s = -1.0 if b[i] < 0.0 else 1.0
        T[i, :n] = s * A[i]
        T[i, n + i] = 1.0
        T[i, n + m] = s * b[i]
    basis = np.array([n + i for i in range(m)], dtype=np.int64)
    # Reduced costs of min(sum of artificials) after pricing out the basis.
    for j in range(n):
        T[m, j] = -T[:m, j].sum()
    T[m, n + m] = -T[:m, n + m].sum()

    status = _bland_loop(T, basis, n + m, max_pivots)
    if status != OPTIMAL:
        return status, np.zeros(n)
    if -T[m, n + m] > 1e-7:
        return INFEASIBLE, np.zeros(n)

    # Drive artificial variables out of the basis; drop redundant rows.
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n:
            col = -1
            for j in range(n):
                if abs(T[i, j]) > _PIVOT_TOL:
                    col = j
                    break
            if col >= 0:
                _pivot(T, basis, i, col)
            else:
                keep[i] = False
    if not keep.all():
        T = np.vstack([T[:m][keep], T[m:]])
        basis = basis[keep]
        m = int(keep.sum())

    # Phase 2: real costs over the original columns only.
    T[m, :] = 0.0
    T[m, :n] = c
    for i in range(m):
        cb = T[m, basis[i]]
        if cb != 0.0:
            T[m] -= cb * T[i]

    status = _bland_loop(T, basis, n, max_pivots)
    x = np.zeros(n)
    if status in (OPTIMAL, UNBOUNDED):
        for i in range(m):
            if basis[i] < n:
                x[basis[i]] = T[i, T.shape[1] - 1]
    return status, x


def knn_vote(sorted_labels, sorted_dists, ks, n_classes):
    """Majority vote over the k nearest neighbors for every row and k.

    ``sorted_labels`` / ``sorted_dists`` hold the train labels/distances of
    each test point ordered by increasing distance (ties by train index).
    Vote ties break by smaller within-vote summed distance, then by smaller
    class index.  Returns an (n_test, len(ks)) int64 array of predictions.
    """
    sorted_labels = np.asarray(sorted_labels, dtype=np.int64)
    sorted_dists = np.asarray(sorted_dists, dtype=np.float64)
    ks = np.asarray(ks, dtype=np.int64)
    n_test = sorted_labels.shape[0]
    preds = np.zeros((n_test, ks.size), dtype=np.int64)
    counts = np.zeros(n_classes + 1, dtype=np.int64)
    dsums = np.zeros(n_classes + 1, dtype=np.float64)

    for t in range(n_test):
        counts[:] = 0
        dsums[:] = 0.0
        pos = 0
        for ki in range(ks.size):
            k = ks[ki]
            while pos < k:
                lab = sorted_labels[t, pos]
                counts[lab] += 1
                dsums[lab] += sorted_dists[t, pos]
                pos += 1
            best = 0
            for cls in range(1, n_classes + 1):
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
