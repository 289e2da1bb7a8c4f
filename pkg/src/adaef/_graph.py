"""Compiled HNSW graph routines.

The graph is passed around as a tuple ``g``::

    (adj0, deg0, upper_off, upper_adj, upper_deg)

``adj0[node, :deg0[node]]`` is the base-layer neighbor list.  A node at level
``L >= 1`` owns rows ``upper_off[node] .. upper_off[node] + L - 1`` of
``upper_adj``; row ``upper_off[node] + lc - 1`` is its list at layer ``lc``.

Base-layer search is resumable: all mutable state lives in caller-owned
buffers plus the small int array ``st = [|C|, |W|, |D|, cur, pos]`` so the
caller can pause once the distance sample is full, pick an ef, truncate
``W`` and continue exactly where the traversal stopped.
"""
import numba as nb
import numpy as np

from adaef._kernels import (
    dist,
    less,
    maxheap_pop,
    maxheap_push,
    minheap_pop,
    minheap_push,
)

_JIT = dict(nopython=True, nogil=True, cache=True)

DONE = 0
PAUSED = 1


@nb.jit(**_JIT)
def neighbors(g, node, level):
    if level == 0:
        return g[0][node, : g[1][node]]
    row = g[2][node] + level - 1
    return g[3][row, : g[4][row]]


@nb.jit(**_JIT)
def set_neighbors(g, node, level, ids, count):
    if level == 0:
        for j in range(count):
            g[0][node, j] = ids[j]
        g[1][node] = count
    else:
        row = g[2][node] + level - 1
        for j in range(count):
            g[3][row, j] = ids[j]
        g[4][row] = count


@nb.jit(**_JIT)
def greedy_closest(vecs, code, g, q, ep, level):
    cur = ep
    curd = dist(q, vecs[ep], code)
    changed = True
    while changed:
        changed = False
        best = cur
        bestd = curd
        nbrs = neighbors(g, cur, level)
        for j in range(nbrs.shape[0]):
            e = nbrs[j]
            d = dist(q, vecs[e], code)
            if less(d, e, bestd, best):
                best = e
                bestd = d
        if best != cur:
            cur = best
            curd = bestd
            changed = True
    return cur


@nb.jit(**_JIT)
def descend(vecs, code, g, q, entry, max_level, stop_level):
    """Greedy routing from the top layer down to ``stop_level``."""
    ep = entry
    for level in range(max_level, stop_level, -1):
        ep = greedy_closest(vecs, code, g, q, ep, level)
    return ep


@nb.jit(**_JIT)
def search_init(vecs, code, deleted, q, ep, visited, tag, st, c_d, c_i, w_d, w_i, dbuf, dlimit):
    visited[ep] = tag
    d = dist(q, vecs[ep], code)
    sc = minheap_push(c_d, c_i, 0, d, ep)
    sw = 0
    sd = 0
    if deleted[ep] == 0:
        sw = maxheap_push(w_d, w_i, 0, d, ep)
        if dlimit > 0:
            dbuf[0] = d
            sd = 1
    st[0] = sc
    st[1] = sw
    st[2] = sd
    st[3] = -1
    st[4] = 0


@nb.jit(**_JIT)
def search_run(vecs, code, g, deleted, q, level, ef, dlimit, visited, tag, st, c_d, c_i, w_d, w_i, dbuf):
    """Best-first layer search; returns PAUSED the moment |D| reaches dlimit."""
    sc = st[0]
    sw = st[1]
    sd = st[2]
    cur = st[3]
    pos = st[4]
    status = DONE
    while True:
        if cur < 0:
            if sc == 0:
                break
            cd = c_d[0]
            ci = c_i[0]
            sc = minheap_pop(c_d, c_i, sc)
            if sw > 0 and less(w_d[0], w_i[0], cd, ci):
                break
            cur = ci
            pos = 0
        nbrs = neighbors(g, cur, level)
        paused = False
        while pos < nbrs.shape[0]:
            e = nbrs[pos]
            pos += 1
            if visited[e] == tag:
                continue
            visited[e] = tag
            de = dist(q, vecs[e], code)
            if sw < ef or less(de, e, w_d[0], w_i[0]):
                sc = minheap_push(c_d, c_i, sc, de, e)
                if deleted[e] == 0:
                    sw = maxheap_push(w_d, w_i, sw, de, e)
                    if sw > ef:
                        sw = maxheap_pop(w_d, w_i, sw)
            if deleted[e] == 0 and sd < dlimit:
                dbuf[sd] = de
                sd += 1
                if sd == dlimit:
                    paused = True
                    break
        if paused:
            status = PAUSED
            break
        cur = -1
    st[0] = sc
    st[1] = sw
    st[2] = sd
    st[3] = cur
    st[4] = pos
    return status


@nb.jit(**_JIT)
def truncate_w(st, w_d, w_i, ef):
    sw = st[1]
    while sw > ef:
        sw = maxheap_pop(w_d, w_i, sw)
    st[1] = sw


@nb.jit(**_JIT)
def drain_sorted(w_d, w_i, sw):
    """Ascending (dist, id) contents of a max-heap (destroys the heap)."""
    ids = np.empty(sw, dtype=np.int64)
    ds = np.empty(sw, dtype=np.float64)
    size = sw
    for j in range(sw - 1, -1, -1):
        ids[j] = w_i[0]
        ds[j] = w_d[0]
        size = maxheap_pop(w_d, w_i, size)
    return ids, ds


@nb.jit(**_JIT)
def hop_count(g, deleted, ep, hops, visited, tag):
    """Live nodes other than ep within ``hops`` base-layer hops of ep (no distances)."""
    n = deleted.shape[0]
    queue = np.empty(n, dtype=np.int64)
    visited[ep] = tag
    queue[0] = ep
    head = 0
    tail = 1
    count = 0
    for _ in range(hops):
        level_end = tail
        while head < level_end:
            u = queue[head]
            head += 1
            nbrs = neighbors(g, u, 0)
            for j in range(nbrs.shape[0]):
                e = nbrs[j]
                if visited[e] == tag:
                    continue
                visited[e] = tag
                queue[tail] = e
                tail += 1
                if deleted[e] == 0:
                    count += 1
    return count


@nb.jit(**_JIT)
def _sort_pairs(ds, ids, count):
    for a in range(1, count):
        d = ds[a]
        i = ids[a]
        b = a - 1
        while b >= 0 and less(d, i, ds[b], ids[b]):
            ds[b + 1] = ds[b]
            ids[b + 1] = ids[b]
            b -= 1
        ds[b + 1] = d
        ids[b + 1] = i


@nb.jit(**_JIT)
def select_heuristic(vecs, code, cand_d, cand_i, count, m, out):
    """Keep a candidate only if it is closer to the base than to every kept one."""
    kept = 0
    for j in range(count):
        if kept >= m:
            break
        e = cand_i[j]
        good = True
        for t in range(kept):
            if dist(vecs[e], vecs[out[t]], code) < cand_d[j]:
                good = False
                break
        if good:
            out[kept] = e
            kept += 1
    return kept


@nb.jit(**_JIT)
def _add_link(vecs, code, g, src, dst, level, mmax, tmp_d, tmp_i, out):
    nbrs = neighbors(g, src, level)
    deg = nbrs.shape[0]
    for j in range(deg):
        if nbrs[j] == dst:
            return
    if deg < mmax:
        for j in range(deg):
            out[j] = nbrs[j]
        out[deg] = dst
        set_neighbors(g, src, level, out, deg + 1)
        return
    for j in range(deg):
        tmp_i[j] = nbrs[j]
        tmp_d[j] = dist(vecs[src], vecs[nbrs[j]], code)
    tmp_i[deg] = dst
    tmp_d[deg] = dist(vecs[src], vecs[dst], code)
    _sort_pairs(tmp_d, tmp_i, deg + 1)
    kept = select_heuristic(vecs, code, tmp_d, tmp_i, deg + 1, mmax, out)
    set_neighbors(g, src, level, out, kept)


@nb.jit(**_JIT)
def build_range(vecs, code, g, levels, deleted, start, stop, entry, max_level, m, m0, ef_construction):
    """Insert nodes ``start..stop-1`` in order; returns the new (entry, max_level)."""
    n = vecs.shape[0]
    visited = np.zeros(n, dtype=np.int32)
    tag = 0
    st = np.zeros(5, dtype=np.int64)
    c_d = np.empty(n + 1, dtype=np.float64)
    c_i = np.empty(n + 1, dtype=np.int64)
    w_d = np.empty(ef_construction + 2, dtype=np.float64)
    w_i = np.empty(ef_construction + 2, dtype=np.int64)
    dbuf = np.empty(1, dtype=np.float64)
    sel = np.empty(m0 + 1, dtype=np.int64)
    tmp_d = np.empty(m0 + 1, dtype=np.float64)
    tmp_i = np.empty(m0 + 1, dtype=np.int64)
    out = np.empty(m0 + 1, dtype=np.int64)
    for i in range(start, stop):
        lvl = levels[i]
        if entry < 0:
            entry = i
            max_level = lvl
            continue
        q = vecs[i]
        ep = descend(vecs, code, g, q, entry, max_level, lvl)
        for lc in range(min(lvl, max_level), -1, -1):
            tag += 1
            search_init(vecs, code, deleted, q, ep, visited, tag, st, c_d, c_i, w_d, w_i, dbuf, 0)
            search_run(vecs, code, g, deleted, q, lc, ef_construction, 0, visited, tag, st, c_d, c_i, w_d, w_i, dbuf)
            cand_i, cand_d = drain_sorted(w_d, w_i, st[1])
            if cand_i.shape[0] == 0:
                continue
            kept = select_heuristic(vecs, code, cand_d, cand_i, cand_i.shape[0], m, sel)
            set_neighbors(g, i, lc, sel, kept)
            mmax = m0 if lc == 0 else m
            for j in range(kept):
                _add_link(vecs, code, g, sel[j], i, lc, mmax, tmp_d, tmp_i, out)
            ep = cand_i[0]
        if lvl > max_level:
            entry = i
            max_level = lvl
    return entry, max_level


@nb.jit(**_JIT)
def encode_lists(adj, deg, owner):
    """Zigzag delta + LEB128 varint encoding of neighbor lists in stored order.

    ``owner[r]`` is the node id that row ``r`` belongs to; the first delta of
    each list is taken relative to it.
    """
    total = 0
    for r in range(adj.shape[0]):
        total += 5 * (deg[r] + 1)
    buf = np.empty(total, dtype=np.uint8)
    pos = 0
    for r in range(adj.shape[0]):
        vals = deg[r]
        # degree first, unsigned
        x = np.uint64(vals)
        while x >= 0x80:
            buf[pos] = np.uint8((x & np.uint64(0x7F)) | np.uint64(0x80))
            pos += 1
            x = x >> np.uint64(7)
        buf[pos] = np.uint8(x)
        pos += 1
        prev = np.int64(owner[r])
        for j in range(vals):
            cur = np.int64(adj[r, j])
            delta = cur - prev
            prev = cur
            z = np.uint64((delta << 1) ^ (delta >> 63))
            while z >= 0x80:
                buf[pos] = np.uint8((z & np.uint64(0x7F)) | np.uint64(0x80))
                pos += 1
                z = z >> np.uint64(7)
            buf[pos] = np.uint8(z)
            pos += 1
    return buf[:pos]


@nb.jit(**_JIT)
def decode_lists(buf, owner, adj, deg):
    """Inverse of encode_lists; returns bytes consumed or -1 on malformed input."""
    pos = 0
    end = buf.shape[0]
    for r in range(adj.shape[0]):
        shift = 0
        x = np.uint64(0)
        while True:
            if pos >= end or shift > 63:
                return -1
            b = np.uint64(buf[pos])
            pos += 1
            x |= (b & np.uint64(0x7F)) << np.uint64(shift)
            if b < 0x80:
                break
            shift += 7
        cnt = np.int64(x)
        if cnt > adj.shape[1]:
            return -1
        deg[r] = cnt
        prev = np.int64(owner[r])
        for j in range(cnt):
            shift = 0
            z = np.uint64(0)
            while True:
                if pos >= end or shift > 63:
                    return -1
                b = np.uint64(buf[pos])
                pos += 1
                z |= (b & np.uint64(0x7F)) << np.uint64(shift)
                if b < 0x80:
                    break
                shift += 7
            delta = np.int64(z >> np.uint64(1)) ^ -np.int64(z & np.uint64(1))
            prev = prev + delta
            adj[r, j] = prev
    return pos
