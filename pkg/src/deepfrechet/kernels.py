"""Hot inner loops.

Each kernel exists twice: a loop-based version compiled with numba
(``*_numba``) and a numpy version (``*_numpy``). The public name points at
the numba variant unless ``DFR_DISABLE_NUMBA`` is set or numba is missing.
Both variants are always importable so tests and ``benchmarks/`` can compare
them directly.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "pava",
    "pava_rows",
    "dijkstra_all_pairs",
    "dykstra_laplacian",
    "pairwise_sqdist",
]


# ---------------------------------------------------------------------------
# isotonic regression (pool adjacent violators, unit weights)
# ---------------------------------------------------------------------------


def _pava_loop(y):
    n = y.shape[0]
    sums = np.empty(n)
    counts = np.empty(n)
    ends = np.empty(n, dtype=np.int64)
    nb = 0
    for i in range(n):
        sums[nb] = y[i]
        counts[nb] = 1.0
        ends[nb] = i
        nb += 1
        while nb > 1 and sums[nb - 2] / counts[nb - 2] > sums[nb - 1] / counts[nb - 1]:
            sums[nb - 2] += sums[nb - 1]
            counts[nb - 2] += counts[nb - 1]
            ends[nb - 2] = ends[nb - 1]
            nb -= 1
    out = np.empty(n)
    start = 0
    for b in range(nb):
        v = sums[b] / counts[b]
        for i in range(start, ends[b] + 1):
            out[i] = v
        start = ends[b] + 1
    return out


def pava_numpy(y):
    """Isotonic fit of a 1-D array; block bookkeeping in Python lists."""
    y = np.asarray(y, dtype=np.float64)
    sums, counts = [], []
    for v in y.tolist():
        sums.append(v)
        counts.append(1)
        while len(sums) > 1 and sums[-2] / counts[-2] > sums[-1] / counts[-1]:
            s, c = sums.pop(), counts.pop()
            sums[-1] += s
            counts[-1] += c
    means = np.asarray(sums) / np.asarray(counts)
    return np.repeat(means, counts)


def pava_rows_numpy(Y):
    Y = np.asarray(Y, dtype=np.float64)
    return np.stack([pava_numpy(row) for row in Y]) if len(Y) else Y.copy()


pava_numba = njit(_pava_loop)


def _pava_rows_loop(Y):
    out = np.empty_like(Y)
    for r in range(Y.shape[0]):
        out[r] = pava_numba(Y[r])
    return out


pava_rows_numba = njit(_pava_rows_loop)


# ---------------------------------------------------------------------------
# all-pairs shortest paths on a CSR graph
# ---------------------------------------------------------------------------


def _heap_push(keys, vals, size, key, val):
    i = size
    keys[i] = key
    vals[i] = val
    while i > 0:
        parent = (i - 1) // 2
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        vals[parent], vals[i] = vals[i], vals[parent]
        i = parent
    return size + 1


def _heap_pop(keys, vals, size):
    key = keys[0]
    val = vals[0]
    size -= 1
    keys[0] = keys[size]
    vals[0] = vals[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        if left + 1 < size and keys[left + 1] < keys[left]:
            child = left + 1
        if keys[i] <= keys[child]:
            break
        keys[child], keys[i] = keys[i], keys[child]
        vals[child], vals[i] = vals[i], vals[child]
        i = child
    return key, val, size


_heap_push_jit = njit(_heap_push)
_heap_pop_jit = njit(_heap_pop)


def _dijkstra_loop(indptr, indices, weights, n):
    out = np.full((n, n), np.inf)
    cap = indices.shape[0] + n + 1
    keys = np.empty(cap)
    vals = np.empty(cap, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    for s in range(n):
        dist = out[s]
        done[:] = False
        dist[s] = 0.0
        size = _heap_push_jit(keys, vals, 0, 0.0, s)
        while size > 0:
            d, u, size = _heap_pop_jit(keys, vals, size)
            if done[u]:
                continue
            done[u] = True
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                nd = d + weights[e]
                if nd < dist[v]:
                    dist[v] = nd
                    size = _heap_push_jit(keys, vals, size, nd, v)
    return out


def dijkstra_all_pairs_numpy(indptr, indices, weights, n):
    """Dijkstra from every source with array-based minimum selection."""
    out = np.full((n, n), np.inf)
    for s in range(n):
        dist = out[s]
        dist[s] = 0.0
        frontier = np.full(n, np.inf)
        frontier[s] = 0.0
        for _ in range(n):
            u = int(np.argmin(frontier))
            d = frontier[u]
            if not np.isfinite(d):
                break
            frontier[u] = np.inf
            dist[u] = d
            lo, hi = indptr[u], indptr[u + 1]
            nbr = indices[lo:hi]
            cand = d + weights[lo:hi]
            better = cand < dist[nbr]
            if np.any(better):
                nbr, cand = nbr[better], cand[better]
                dist[nbr] = cand
                frontier[nbr] = cand
    return out


dijkstra_all_pairs_numba = njit(_dijkstra_loop)


# ---------------------------------------------------------------------------
# Dykstra projection onto the graph Laplacian polytope
# ---------------------------------------------------------------------------
# Two convex sets: A = {symmetric, zero row sums} (affine, exact projection)
# and B = {off-diagonal entries in [-W, 0]} (box, diagonal free). For an
# affine set the Dykstra correction term is not needed.


def _dykstra_laplacian_loop(M, W, tol, max_sweeps):
    m = M.shape[0]
    a = np.empty((m, m))
    b = np.empty((m, m))
    q = np.zeros((m, m))
    prev = np.empty((m, m))
    s = np.empty(m)
    for i in range(m):
        for j in range(m):
            prev[i, j] = M[i, j]
    x = prev.copy()
    resid = np.inf
    sweeps = 0
    for it in range(max_sweeps):
        sweeps = it + 1
        # P_A(x)
        total = 0.0
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += 0.5 * (x[i, j] + x[j, i])
            s[i] = acc
            total += acc
        shift = total / (2.0 * m)
        for i in range(m):
            s[i] = (s[i] - shift) / m
        for i in range(m):
            for j in range(m):
                a[i, j] = 0.5 * (x[i, j] + x[j, i]) - (s[i] + s[j])
        # P_B(a + q) with correction update
        diff = 0.0
        for i in range(m):
            for j in range(m):
                v = a[i, j] + q[i, j]
                if i != j:
                    if v > 0.0:
                        w = 0.0
                    elif v < -W:
                        w = -W
                    else:
                        w = v
                else:
                    w = v
                b[i, j] = w
                q[i, j] = v - w
                d = w - prev[i, j]
                diff += d * d
                prev[i, j] = w
                x[i, j] = w
        resid = np.sqrt(diff)
        if resid <= tol:
            break
    for i in range(m):
        acc = 0.0
        for j in range(m):
            if i != j:
                acc += b[i, j]
        b[i, i] = -acc
    return b, sweeps, resid


def dykstra_laplacian_numpy(M, W, tol, max_sweeps):
    M = np.asarray(M, dtype=np.float64)
    m = M.shape[0]
    off = ~np.eye(m, dtype=bool)
    x = M.copy()
    prev = M.copy()
    q = np.zeros_like(M)
    resid = np.inf
    sweeps = 0
    for it in range(max_sweeps):
        sweeps = it + 1
        sym = 0.5 * (x + x.T)
        rs = sym.sum(axis=1)
        corr = (rs - rs.sum() / (2.0 * m)) / m
        a = sym - (corr[:, None] + corr[None, :])
        v = a + q
        b = v.copy()
        b[off] = np.clip(v[off], -W, 0.0)
        q = v - b
        resid = float(np.sqrt(np.sum((b - prev) ** 2)))
        prev = b
        x = b
        if resid <= tol:
            break
    b = x.copy()
    np.fill_diagonal(b, 0.0)
    np.fill_diagonal(b, -b.sum(axis=1))
    return b, sweeps, resid


dykstra_laplacian_numba = njit(_dykstra_laplacian_loop)


# ---------------------------------------------------------------------------
# pairwise squared Euclidean distances between rows
# ---------------------------------------------------------------------------


def _pairwise_sqdist_loop(A):
    n, d = A.shape
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                t = A[i, k] - A[j, k]
                acc += t * t
            out[i, j] = acc
            out[j, i] = acc
    return out


def pairwise_sqdist_numpy(A):
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    out = np.zeros((n, n))
    for i in range(n - 1):
        row = np.sum((A[i + 1 :] - A[i]) ** 2, axis=1)
        out[i, i + 1 :] = row
        out[i + 1 :, i] = row
    return out


pairwise_sqdist_numba = njit(_pairwise_sqdist_loop)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _contig(a, dtype=np.float64):
    return np.ascontiguousarray(a, dtype=dtype)


if USE_NUMBA:

    def pava(y):
        return pava_numba(_contig(y))

    def pava_rows(Y):
        return pava_rows_numba(_contig(Y))

    def dijkstra_all_pairs(indptr, indices, weights, n):
        return dijkstra_all_pairs_numba(
            _contig(indptr, np.int64), _contig(indices, np.int64), _contig(weights), int(n)
        )

    def dykstra_laplacian(M, W, tol, max_sweeps):
        b, sweeps, resid = dykstra_laplacian_numba(_contig(M), float(W), float(tol), int(max_sweeps))
        return b, int(sweeps), float(resid)

    def pairwise_sqdist(A):
        return pairwise_sqdist_numba(_contig(A))

else:
    pava = pava_numpy
    pava_rows = pava_rows_numpy
    dijkstra_all_pairs = dijkstra_all_pairs_numpy
    dykstra_laplacian = dykstra_laplacian_numpy
    pairwise_sqdist = pairwise_sqdist_numpy
