"""Hot numeric kernels with a numba path and a pure-numpy path.

Each public kernel dispatches on :data:`dtrans._accel.USE_NUMBA`.  Both
implementations are importable directly (``*_numba`` / ``*_numpy``) so that
tests and the benchmark can compare them.
"""

import itertools
import math

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "permanent_minors",
    "permutation_scores",
    "permutation_pair_marginals",
    "assignment_duals",
    "transport_simplex",
]


# --------------------------------------------------------------------------
# Ryser permanent together with every (n-1)x(n-1) minor permanent
# --------------------------------------------------------------------------
#
# perm(B) = (-1)^N sum_S (-1)^|S| prod_i R_i(S),  R_i(S) = sum_{j in S} B_ij.
# The minor perm(B^(k,l)) equals d perm / d B_kl, which is the same sum
# restricted to S containing l with row k left out of the product.


@njit
def _permanent_minors_numba(B):
    n = B.shape[0]
    rows = np.zeros(n)
    minors = np.zeros((n, n))
    pre = np.empty(n + 1)
    suf = np.empty(n + 1)
    in_set = np.zeros(n, dtype=np.bool_)
    perm = 0.0
    size = 0
    prev_gray = 0
    for s in range(1, 1 << n):
        gray = s ^ (s >> 1)
        diff = gray ^ prev_gray
        col = 0
        while (diff >> col) & 1 == 0:
            col += 1
        if gray & diff:
            in_set[col] = True
            size += 1
            for i in range(n):
                rows[i] += B[i, col]
        else:
            in_set[col] = False
            size -= 1
            for i in range(n):
                rows[i] -= B[i, col]
        prev_gray = gray
        sign = -1.0 if size & 1 else 1.0
        pre[0] = 1.0
        for i in range(n):
            pre[i + 1] = pre[i] * rows[i]
        suf[n] = 1.0
        for i in range(n - 1, -1, -1):
            suf[i] = suf[i + 1] * rows[i]
        perm += sign * pre[n]
        for k in range(n):
            excl = sign * pre[k] * suf[k + 1]
            if excl != 0.0:
                for l in range(n):
                    if in_set[l]:
                        minors[k, l] += excl
    outer = -1.0 if n & 1 else 1.0
    return outer * perm, outer * minors


def _permanent_minors_numpy(B):
    n = B.shape[0]
    masks = np.arange(1 << n, dtype=np.int64)
    S = ((masks[:, None] >> np.arange(n)) & 1).astype(np.float64)
    sign = np.where(S.sum(axis=1) % 2 == 1, -1.0, 1.0)
    R = S @ B.T
    pre = np.ones((S.shape[0], n + 1))
    pre[:, 1:] = np.cumprod(R, axis=1)
    suf = np.ones((S.shape[0], n + 1))
    suf[:, :-1] = np.cumprod(R[:, ::-1], axis=1)[:, ::-1]
    excl = pre[:, :-1] * suf[:, 1:]
    outer = -1.0 if n % 2 else 1.0
    perm = outer * float(sign @ pre[:, n])
    minors = outer * ((excl * sign[:, None]).T @ S)
    return perm, minors


def permanent_minors(B):
    """Permanent of a square matrix and the permanents of all its minors.

    Returns ``(perm, minors)`` with ``minors[i, j]`` the permanent of ``B``
    with row ``i`` and column ``j`` removed.  Cost is O(2^N N^2).
    """
    B = np.ascontiguousarray(B, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("permanent needs a square matrix")
    if B.shape[0] == 0:
        return 1.0, np.zeros((0, 0))
    if USE_NUMBA:
        return _permanent_minors_numba(B)
    return _permanent_minors_numpy(B)


# --------------------------------------------------------------------------
# Exhaustive permutation enumeration (lexicographic order)
# --------------------------------------------------------------------------


@njit
def _next_permutation(a):
    n = a.shape[0]
    i = n - 2
    while i >= 0 and a[i] >= a[i + 1]:
        i -= 1
    if i < 0:
        return -1
    j = n - 1
    while a[j] <= a[i]:
        j -= 1
    a[i], a[j] = a[j], a[i]
    lo, hi = i + 1, n - 1
    while lo < hi:
        a[lo], a[hi] = a[hi], a[lo]
        lo += 1
        hi -= 1
    return i


@njit
def _permutation_scores_numba(A, total):
    n = A.shape[0]
    out = np.empty(total)
    perm = np.arange(n)
    partial = np.zeros(n + 1)
    for k in range(n):
        partial[k + 1] = partial[k] + A[k, perm[k]]
    out[0] = partial[n]
    for idx in range(1, total):
        start = _next_permutation(perm)
        for k in range(start, n):
            partial[k + 1] = partial[k] + A[k, perm[k]]
        out[idx] = partial[n]
    return out


@njit
def _pair_marginals_numba(A, log_norm, total):
    n = A.shape[0]
    out = np.zeros((n, n))
    perm = np.arange(n)
    partial = np.zeros(n + 1)
    for k in range(n):
        partial[k + 1] = partial[k] + A[k, perm[k]]
    for idx in range(total):
        if idx > 0:
            start = _next_permutation(perm)
            for k in range(start, n):
                partial[k + 1] = partial[k] + A[k, perm[k]]
        w = math.exp(partial[n] - log_norm)
        for k in range(n):
            out[k, perm[k]] += w
    return out


_CHUNK = 1 << 16


def _perm_chunks(n):
    it = itertools.permutations(range(n))
    while True:
        block = list(itertools.islice(it, _CHUNK))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def _permutation_scores_numpy(A, total):
    n = A.shape[0]
    rows = np.arange(n)
    return np.concatenate([A[rows, P].sum(axis=1) for P in _perm_chunks(n)])


def _pair_marginals_numpy(A, log_norm, total):
    n = A.shape[0]
    rows = np.arange(n)
    out = np.zeros((n, n))
    for P in _perm_chunks(n):
        w = np.exp(A[rows, P].sum(axis=1) - log_norm)
        for k in range(n):
            np.add.at(out[k], P[:, k], w)
    return out


def permutation_scores(A):
    """``sum_j A[j, sigma(j)]`` for every permutation, lexicographic order."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    total = math.factorial(A.shape[0])
    if USE_NUMBA:
        return _permutation_scores_numba(A, total)
    return _permutation_scores_numpy(A, total)


def permutation_pair_marginals(A, log_norm):
    """``sum_sigma exp(score(sigma) - log_norm) 1{sigma(i) = j}`` as a matrix."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    total = math.factorial(A.shape[0])
    if USE_NUMBA:
        return _pair_marginals_numba(A, float(log_norm), total)
    return _pair_marginals_numpy(A, float(log_norm), total)


# --------------------------------------------------------------------------
# Hungarian algorithm (shortest augmenting path) with dual potentials
# --------------------------------------------------------------------------


@njit
def _assignment_numba(C):
    n = C.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.zeros(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = C[i0 - 1, j - 1] - u[i0] - v[j]
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
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col[p[j] - 1] = j - 1
    return col, u[1:].copy(), v[1:].copy()


def _assignment_numpy(C):
    n = C.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    Cp = np.zeros((n + 1, n + 1))
    Cp[1:, 1:] = C
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = Cp[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col = np.empty(n, dtype=np.int64)
    col[p[1:] - 1] = np.arange(n)
    return col, u[1:].copy(), v[1:].copy()


def assignment_duals(C):
    """Min-cost perfect matching of a square matrix.

    Returns ``(col, u, v)``: ``col[i]`` is the column matched to row ``i`` and
    ``u``, ``v`` are dual potentials with ``C - u[:, None] - v[None, :] >= 0``,
    zero on the matched entries.
    """
    C = np.ascontiguousarray(C, dtype=np.float64)
    if USE_NUMBA:
        return _assignment_numba(C)
    return _assignment_numpy(C)


# --------------------------------------------------------------------------
# Transportation problem: network simplex on the bipartite graph
# --------------------------------------------------------------------------
#
# The basis is a spanning tree of m + k - 1 cells.  Flows on the tree are
# determined by the marginals alone, so feasibility is kept to rounding
# error even when weights span many orders of magnitude.


@njit
def _northwest_corner(a, b):
    m, k = a.shape[0], b.shape[0]
    nb = m + k - 1
    bi = np.empty(nb, dtype=np.int64)
    bj = np.empty(nb, dtype=np.int64)
    flow = np.empty(nb)
    ra = a.copy()
    cb = b.copy()
    i = 0
    j = 0
    for t in range(nb):
        f = min(ra[i], cb[j])
        bi[t] = i
        bj[t] = j
        flow[t] = f
        ra[i] -= f
        cb[j] -= f
        if i == m - 1:
            j += 1
        elif j == k - 1:
            i += 1
        elif ra[i] <= cb[j]:
            i += 1
        else:
            j += 1
    return bi, bj, flow


@njit
def _tree_potentials(C, bi, bj, parent, parent_edge, depth, pot):
    # BFS over the basis tree from row node 0; rows are 0..m-1, columns m..m+k-1
    m = C.shape[0]
    total = m + C.shape[1]
    nb = bi.shape[0]
    deg = np.zeros(total + 1, dtype=np.int64)
    for e in range(nb):
        deg[bi[e] + 1] += 1
        deg[m + bj[e] + 1] += 1
    for v in range(total):
        deg[v + 1] += deg[v]
    fill = deg[:-1].copy()
    adj = np.empty(2 * nb, dtype=np.int64)
    for e in range(nb):
        adj[fill[bi[e]]] = e
        fill[bi[e]] += 1
        adj[fill[m + bj[e]]] = e
        fill[m + bj[e]] += 1
    parent[:] = -1
    depth[:] = -1
    queue = np.empty(total, dtype=np.int64)
    queue[0] = 0
    depth[0] = 0
    pot[0] = 0.0
    head = 0
    tail = 1
    while head < tail:
        v = queue[head]
        head += 1
        for s in range(deg[v], deg[v + 1]):
            e = adj[s]
            w = m + bj[e] if v < m else bi[e]
            if depth[w] < 0:
                depth[w] = depth[v] + 1
                parent[w] = v
                parent_edge[w] = e
                pot[w] = C[bi[e], bj[e]] - pot[v]
                queue[tail] = w
                tail += 1
    return tail == total


@njit
def _pivot(bi, bj, flow, parent, parent_edge, depth, ei, ej, m):
    # cycle: entering cell (+), then alternate signs walking from column ej
    # up to the common ancestor and back down to row ei
    x = m + ej
    y = ei
    left = np.empty(depth[x] + 1, dtype=np.int64)
    right = np.empty(depth[y] + 1, dtype=np.int64)
    nl = 0
    nr = 0
    while depth[x] > depth[y]:
        left[nl] = parent_edge[x]
        nl += 1
        x = parent[x]
    while depth[y] > depth[x]:
        right[nr] = parent_edge[y]
        nr += 1
        y = parent[y]
    while x != y:
        left[nl] = parent_edge[x]
        nl += 1
        x = parent[x]
        right[nr] = parent_edge[y]
        nr += 1
        y = parent[y]
    length = nl + nr
    cycle = np.empty(length, dtype=np.int64)
    for s in range(nl):
        cycle[s] = left[s]
    for s in range(nr):
        cycle[nl + s] = right[nr - 1 - s]
    theta = np.inf
    leave = -1
    for s in range(0, length, 2):
        e = cycle[s]
        if flow[e] < theta:
            theta = flow[e]
            leave = e
    for s in range(length):
        e = cycle[s]
        if s % 2 == 0:
            flow[e] -= theta
        else:
            flow[e] += theta
    bi[leave] = ei
    bj[leave] = ej
    flow[leave] = theta


@njit
def _transport_numba(C, a, b, tol, max_iter):
    m, k = C.shape
    bi, bj, flow = _northwest_corner(a, b)
    total = m + k
    parent = np.empty(total, dtype=np.int64)
    parent_edge = np.empty(total, dtype=np.int64)
    depth = np.empty(total, dtype=np.int64)
    pot = np.empty(total)
    it = 0
    while True:
        _tree_potentials(C, bi, bj, parent, parent_edge, depth, pot)
        best = -tol
        ei = -1
        ej = -1
        for i in range(m):
            for j in range(k):
                red = C[i, j] - pot[i] - pot[m + j]
                if red < best:
                    best = red
                    ei = i
                    ej = j
        if ei < 0 or it >= max_iter:
            break
        _pivot(bi, bj, flow, parent, parent_edge, depth, ei, ej, m)
        it += 1
    x = np.zeros((m, k))
    for e in range(bi.shape[0]):
        x[bi[e], bj[e]] += max(flow[e], 0.0)
    return x, pot[:m].copy(), pot[m:].copy(), it


def _transport_numpy(C, a, b, tol, max_iter):
    m, k = C.shape
    bi, bj, flow = _northwest_corner(a, b)
    total = m + k
    parent = np.empty(total, dtype=np.int64)
    parent_edge = np.empty(total, dtype=np.int64)
    depth = np.empty(total, dtype=np.int64)
    pot = np.empty(total)
    it = 0
    while True:
        _tree_potentials(C, bi, bj, parent, parent_edge, depth, pot)
        red = C - pot[:m, None] - pot[None, m:]
        flat = int(np.argmin(red))
        if red.flat[flat] >= -tol or it >= max_iter:
            break
        _pivot(bi, bj, flow, parent, parent_edge, depth, flat // k, flat % k, m)
        it += 1
    x = np.zeros((m, k))
    np.add.at(x, (bi, bj), np.maximum(flow, 0.0))
    return x, pot[:m].copy(), pot[m:].copy(), it


def transport_simplex(C, a, b, tol=None, max_iter=None):
    """Min-cost transportation plan by the network simplex method.

    Returns ``(plan, u, v, iterations)`` with dual potentials satisfying
    ``C - u[:, None] - v[None, :] >= -tol`` and equality on basic cells.
    """
    C = np.ascontiguousarray(C, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    m, k = C.shape
    if tol is None:
        tol = 1e-12 * max(1.0, float(np.abs(C).max()))
    if max_iter is None:
        max_iter = 50 * (m + k) * (m + k) + 1000
    if USE_NUMBA:
        return _transport_numba(C, a, b, float(tol), int(max_iter))
    return _transport_numpy(C, a, b, float(tol), int(max_iter))
