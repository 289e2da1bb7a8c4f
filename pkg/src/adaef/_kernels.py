"""Compiled distance kernels and (distance, id) binary heaps.

Heap entries are ordered lexicographically by (distance, id) so ties are
always broken by the smaller node id.
"""
import numba as nb
import numpy as np

IP = 0
CS = 1
CD = 2

_JIT = dict(nopython=True, nogil=True, cache=True)


@nb.jit(**_JIT)
def dot64(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += np.float64(a[i]) * np.float64(b[i])
    return s


@nb.jit(**_JIT)
def dist(a, b, code):
    d = dot64(a, b)
    if code == CD:
        return 1.0 - d
    return -d


@nb.jit(**_JIT)
def dist_many(q, rows, code):
    out = np.empty(rows.shape[0], dtype=np.float64)
    for i in range(rows.shape[0]):
        out[i] = dist(q, rows[i], code)
    return out


@nb.jit(**_JIT)
def dist_ids(q, vecs, ids, code):
    out = np.empty(ids.shape[0], dtype=np.float64)
    for j in range(ids.shape[0]):
        out[j] = dist(q, vecs[ids[j]], code)
    return out


@nb.jit(**_JIT)
def less(da, ia, db, ib):
    return da < db or (da == db and ia < ib)


# --- min-heap ---------------------------------------------------------------

@nb.jit(**_JIT)
def minheap_push(hd, hi, size, d, i):
    pos = size
    while pos > 0:
        parent = (pos - 1) >> 1
        if less(d, i, hd[parent], hi[parent]):
            hd[pos] = hd[parent]
            hi[pos] = hi[parent]
            pos = parent
        else:
            break
    hd[pos] = d
    hi[pos] = i
    return size + 1


@nb.jit(**_JIT)
def minheap_pop(hd, hi, size):
    """Remove the root; caller reads hd[0], hi[0] first."""
    size -= 1
    if size == 0:
        return 0
    d = hd[size]
    i = hi[size]
    pos = 0
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        if child + 1 < size and less(hd[child + 1], hi[child + 1], hd[child], hi[child]):
            child += 1
        if less(hd[child], hi[child], d, i):
            hd[pos] = hd[child]
            hi[pos] = hi[child]
            pos = child
        else:
            break
    hd[pos] = d
    hi[pos] = i
    return size


# --- max-heap ---------------------------------------------------------------

@nb.jit(**_JIT)
def maxheap_push(hd, hi, size, d, i):
    pos = size
    while pos > 0:
        parent = (pos - 1) >> 1
        if less(hd[parent], hi[parent], d, i):
            hd[pos] = hd[parent]
            hi[pos] = hi[parent]
            pos = parent
        else:
            break
    hd[pos] = d
    hi[pos] = i
    return size + 1


@nb.jit(**_JIT)
def maxheap_pop(hd, hi, size):
    size -= 1
    if size == 0:
        return 0
    d = hd[size]
    i = hi[size]
    pos = 0
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        if child + 1 < size and less(hd[child], hi[child], hd[child + 1], hi[child + 1]):
            child += 1
        if less(d, i, hd[child], hi[child]):
            hd[pos] = hd[child]
            hi[pos] = hi[child]
            pos = child
        else:
            break
    hd[pos] = d
    hi[pos] = i
    return size


@nb.jit(**_JIT)
def topk_ids(q, vecs, live, code, k):
    """Exact top-k by (distance, id) over rows with ``live[i] != 0``.

    Bounded max-heap selection; returns (ids, dists) ascending.
    """
    hd = np.empty(k + 1, dtype=np.float64)
    hi = np.empty(k + 1, dtype=np.int64)
    size = 0
    for i in range(vecs.shape[0]):
        if live[i] == 0:
            continue
        d = dist(q, vecs[i], code)
        if size < k:
            size = maxheap_push(hd, hi, size, d, i)
        elif less(d, i, hd[0], hi[0]):
            size = maxheap_pop(hd, hi, size)
            size = maxheap_push(hd, hi, size, d, i)
    ids = np.empty(size, dtype=np.int64)
    ds = np.empty(size, dtype=np.float64)
    for j in range(size - 1, -1, -1):
        ids[j] = hi[0]
        ds[j] = hd[0]
        size = maxheap_pop(hd, hi, size)
    return ids, ds
