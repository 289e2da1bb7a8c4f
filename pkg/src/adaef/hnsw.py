"""HNSW index: construction, fixed-ef search and adaptive-ef search.

The adaptive search starts the base-layer traversal with an unbounded result
list, collects the distances of the first ``l`` live nodes it visits (``l`` is
the number of live nodes within ``hops`` base-layer hops of the entry point),
asks the ef-estimation table for an ef, trims the result list and then carries
on as an ordinary bounded best-first search.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from adaef import _graph, eftable
from adaef.core import Dataset, Metric, prepare_query, prepare_rows

UNCAPPED = np.iinfo(np.int64).max

MAGIC = b"ADAEFHNS"
VERSION = 1
_HEADER = struct.Struct("<8sIIQBIIqqiQQ")


class UnknownNodeError(LookupError):
    """Unknown or already deleted node id."""


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    ef_construction: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.ef_construction < self.m:
            raise ValueError("ef_construction must be >= m")

    @property
    def m0(self) -> int:
        return 2 * self.m

    @property
    def level_norm_factor(self) -> float:
        return 1.0 / math.log(self.m)


@dataclass
class SearchResult:
    ids: np.ndarray
    distances: np.ndarray


@dataclass
class AdaptiveResult:
    ids: np.ndarray
    distances: np.ndarray
    ef: int | None
    """Assigned ef, or None when the estimator never fired (uncapped search)."""
    limit: int
    score: float | None
    sample: np.ndarray


@dataclass
class _Traversal:
    ep: int
    q: np.ndarray
    visited: np.ndarray
    st: np.ndarray
    c_d: np.ndarray
    c_i: np.ndarray
    w_d: np.ndarray
    w_i: np.ndarray
    dbuf: np.ndarray
    limit: int
    status: int = _graph.DONE


def _draw_levels(rng: np.random.Generator, count: int, mult: float) -> np.ndarray:
    u = rng.random(count)
    return np.floor(-np.log1p(-u) * mult).astype(np.int32)


class HnswIndex:
    """Hierarchical navigable small world graph over float32 vectors.

    Node ids are row positions in insertion order and are never reused;
    deleted nodes stay in the graph as tombstones that route but never
    appear in results.
    """

    def __init__(self, dim: int, metric: Metric | str = Metric.COSINE_DISTANCE,
                 params: HnswParams | None = None) -> None:
        self.dim = int(dim)
        self.metric = Metric.parse(metric)
        self.params = params or HnswParams()
        m, m0 = self.params.m, self.params.m0
        self._vecs = np.empty((0, self.dim), dtype=np.float32)
        self._levels = np.empty(0, dtype=np.int32)
        self._deleted = np.empty(0, dtype=np.uint8)
        self._adj0 = np.empty((0, m0), dtype=np.int64)
        self._deg0 = np.empty(0, dtype=np.int64)
        self._upper_off = np.empty(0, dtype=np.int64)
        self._upper_adj = np.empty((0, m), dtype=np.int64)
        self._upper_deg = np.empty(0, dtype=np.int64)
        self.entry = -1
        self.max_level = -1
        self._batches = 0

    # -- construction ------------------------------------------------------

    @classmethod
    def build(cls, ds: Dataset | np.ndarray, params: HnswParams | None = None,
              metric: Metric | str = Metric.COSINE_DISTANCE) -> HnswIndex:
        vectors = ds.vectors if isinstance(ds, Dataset) else np.asarray(ds)
        if vectors.ndim != 2 or vectors.shape[0] == 0:
            raise ValueError("cannot build an index over an empty dataset")
        idx = cls(vectors.shape[1], metric, params)
        idx.insert(vectors)
        return idx

    def insert(self, vectors) -> np.ndarray:
        """Append vectors (one or a batch) with standard HNSW insertion."""
        arr = np.asarray(vectors, dtype=np.float32)
        if arr.ndim == 1:
            arr = arr[None, :]
        rows = prepare_rows(arr, self.metric, self.dim)
        count = rows.shape[0]
        start = self.n
        if count == 0:
            return np.empty(0, dtype=np.int64)
        p = self.params
        rng = np.random.default_rng([p.seed, self._batches])
        self._batches += 1
        levels = _draw_levels(rng, count, p.level_norm_factor)

        n_upper = self._upper_adj.shape[0]
        offs = np.full(count, -1, dtype=np.int64)
        has_upper = levels > 0
        offs[has_upper] = n_upper + np.concatenate(([0], np.cumsum(levels[has_upper])[:-1]))
        extra = int(levels.sum())

        self._vecs = np.concatenate([self._vecs, rows])
        self._levels = np.concatenate([self._levels, levels])
        self._deleted = np.concatenate([self._deleted, np.zeros(count, np.uint8)])
        self._adj0 = np.concatenate([self._adj0, np.zeros((count, p.m0), np.int64)])
        self._deg0 = np.concatenate([self._deg0, np.zeros(count, np.int64)])
        self._upper_off = np.concatenate([self._upper_off, offs])
        self._upper_adj = np.concatenate([self._upper_adj, np.zeros((extra, p.m), np.int64)])
        self._upper_deg = np.concatenate([self._upper_deg, np.zeros(extra, np.int64)])

        entry, max_level = _graph.build_range(
            self._vecs, self.metric.code, self._g, self._levels, self._deleted,
            start, start + count, self.entry, self.max_level,
            p.m, p.m0, p.ef_construction,
        )
        self.entry, self.max_level = int(entry), int(max_level)
        return np.arange(start, start + count, dtype=np.int64)

    def delete(self, ids) -> None:
        ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
        for i in ids:
            if i < 0 or i >= self.n or self._deleted[i]:
                raise UnknownNodeError(f"unknown or already deleted id {int(i)}")
        self._deleted[ids] = 1

    # -- properties --------------------------------------------------------

    @property
    def _g(self):
        return (self._adj0, self._deg0, self._upper_off, self._upper_adj, self._upper_deg)

    @property
    def n(self) -> int:
        return self._vecs.shape[0]

    @property
    def live_count(self) -> int:
        return int(self.n - self._deleted.sum())

    @property
    def vectors(self) -> np.ndarray:
        """Stored vectors (unit length for cosine metrics), including tombstones."""
        return self._vecs

    @property
    def live_mask(self) -> np.ndarray:
        return self._deleted == 0

    def live_ids(self) -> np.ndarray:
        return np.flatnonzero(self._deleted == 0)

    def is_live(self, node: int) -> bool:
        return 0 <= node < self.n and not self._deleted[node]

    def neighbors(self, node: int, level: int = 0) -> np.ndarray:
        return _graph.neighbors(self._g, node, level).copy()

    def adjacency_bytes(self) -> bytes:
        """Canonical dump of every adjacency list, for determinism checks."""
        def used(adj, deg):
            # slots past a node's degree may hold stale ids from pruning
            return np.where(np.arange(adj.shape[1]) < deg[:, None], adj, -1)

        return b"".join([
            self._deg0.tobytes(), used(self._adj0, self._deg0).tobytes(),
            self._upper_deg.tobytes(), used(self._upper_adj, self._upper_deg).tobytes(),
            self._levels.tobytes(),
        ])

    # -- search ------------------------------------------------------------

    def _query(self, q) -> np.ndarray:
        return prepare_query(q, self.metric, self.dim)

    def entry_point(self, q) -> int:
        """Base-layer entry point reached by greedy descent through the upper layers."""
        if self.n == 0:
            raise ValueError("index is empty")
        qv = self._query(q)
        return int(_graph.descend(self._vecs, self.metric.code, self._g, qv, self.entry, self.max_level, 0))

    def two_hop_limit(self, ep: int, hops: int = 2) -> int:
        if not 0 <= ep < self.n:
            raise UnknownNodeError(f"unknown node {ep}")
        visited = np.zeros(self.n, dtype=np.int32)
        return int(_graph.hop_count(self._g, self._deleted, ep, hops, visited, 1))

    def _start(self, qv: np.ndarray, ep: int, ef: int, limit: int) -> _Traversal:
        n = self.n
        wcap = n + 2 if ef >= n else ef + 2
        t = _Traversal(
            ep=ep, q=qv, visited=np.zeros(n, dtype=np.int32), st=np.zeros(5, dtype=np.int64),
            c_d=np.empty(n + 1), c_i=np.empty(n + 1, dtype=np.int64),
            w_d=np.empty(wcap), w_i=np.empty(wcap, dtype=np.int64),
            dbuf=np.empty(max(limit, 1)), limit=limit,
        )
        _graph.search_init(self._vecs, self.metric.code, self._deleted, qv, ep, t.visited, 2,
                           t.st, t.c_d, t.c_i, t.w_d, t.w_i, t.dbuf, limit)
        return t

    def _run(self, t: _Traversal, ef: int) -> int:
        t.status = _graph.search_run(
            self._vecs, self.metric.code, self._g, self._deleted, t.q, 0, ef, t.limit,
            t.visited, 2, t.st, t.c_d, t.c_i, t.w_d, t.w_i, t.dbuf,
        )
        return t.status

    def search_fixed(self, q, k: int, ef: int) -> SearchResult:
        """Standard HNSW k-NN search with a fixed base-layer ef."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if ef < k:
            raise ValueError(f"ef ({ef}) must be >= k ({k})")
        qv = self._query(q)
        if self.n == 0:
            return SearchResult(np.empty(0, np.int64), np.empty(0))
        ep = int(_graph.descend(self._vecs, self.metric.code, self._g, qv, self.entry, self.max_level, 0))
        t = self._start(qv, ep, ef, 0)
        self._run(t, ef)
        ids, ds = _graph.drain_sorted(t.w_d, t.w_i, t.st[1])
        return SearchResult(ids[:k], ds[:k])

    def sample_distances(self, q, hops: int = 2) -> tuple[np.ndarray, int, _Traversal]:
        """Run the unbounded opening phase of the adaptive search.

        Returns the collected distance sample, the limit ``l`` and the paused
        traversal (``status == PAUSED`` when the sample filled up).
        """
        qv = self._query(q)
        ep = int(_graph.descend(self._vecs, self.metric.code, self._g, qv, self.entry, self.max_level, 0))
        limit = self.two_hop_limit(ep, hops)
        t = self._start(qv, ep, UNCAPPED, limit)
        self._run(t, UNCAPPED)
        return t.dbuf[: t.st[2]].copy(), limit, t

    def adaptive_search(self, q, k: int, r: float, stats, table, cfg=None, hops: int | None = None) -> AdaptiveResult:
        """Adaptive-ef k-NN search targeting mean recall ``r``.

        ``cfg`` and ``hops`` default to the values the table was built with.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 < r <= 1.0:
            raise ValueError("target recall must be in (0, 1]")
        if table is None or not table.groups:
            raise ValueError("an ef-estimation table is required")
        if stats is None or stats.metric is not self.metric:
            raise ValueError("dataset statistics missing or built for a different metric")
        if stats.dim != self.dim:
            raise ValueError("dataset statistics dimension does not match the index")
        cfg = cfg or table.cfg
        hops = table.hops if hops is None else hops
        if self.live_count == 0:
            return AdaptiveResult(np.empty(0, np.int64), np.empty(0), None, 0, None, np.empty(0))
        sample, limit, t = self.sample_distances(q, hops)
        assigned = None
        score = None
        if t.status == _graph.PAUSED:
            qs = eftable.score_query(q, sample, stats, cfg)
            score = qs.score
            est = eftable.lookup_ef(table.for_target(r), qs.score, r)
            assigned = max(int(est), k)
            _graph.truncate_w(t.st, t.w_d, t.w_i, assigned)
            self._run(t, assigned)
        ids, ds = _graph.drain_sorted(t.w_d, t.w_i, t.st[1])
        return AdaptiveResult(ids[:k], ds[:k], assigned, limit, score, sample)

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        p = self.params
        owners0 = np.arange(self.n, dtype=np.int64)
        base = _graph.encode_lists(self._adj0, self._deg0, owners0)
        rows, owners = self._upper_rows_by_level()
        upper = _graph.encode_lists(self._upper_adj[rows], self._upper_deg[rows], owners)
        header = _HEADER.pack(MAGIC, VERSION, self.dim, self.n, self.metric.code, p.m,
                              p.ef_construction, p.seed, self.entry, self.max_level,
                              self._upper_adj.shape[0], self._batches)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self._vecs.astype("<f4").tobytes())
            fh.write(self._levels.astype("<i4").tobytes())
            fh.write(self._deleted.tobytes())
            for blob in (base, upper):
                fh.write(struct.pack("<Q", blob.shape[0]))
                fh.write(blob.tobytes())

    def _upper_rows_by_level(self) -> tuple[np.ndarray, np.ndarray]:
        rows, owners = [], []
        for level in range(1, self.max_level + 1):
            nodes = np.flatnonzero(self._levels >= level)
            rows.append(self._upper_off[nodes] + level - 1)
            owners.append(nodes)
        if not rows:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        return np.concatenate(rows).astype(np.int64), np.concatenate(owners).astype(np.int64)

    @classmethod
    def load(cls, path: str | Path) -> HnswIndex:
        data = Path(path).read_bytes()
        buf = io.BytesIO(data)
        raw = buf.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise ValueError("truncated index file header")
        (magic, version, dim, n, code, m, efc, seed, entry, max_level,
         n_upper, batches) = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError("not an index snapshot (bad magic)")
        if version != VERSION:
            raise ValueError(f"unsupported index snapshot version {version}")
        idx = cls(dim, Metric.from_code(code), HnswParams(m, efc, seed))

        def take(nbytes: int) -> bytes:
            chunk = buf.read(nbytes)
            if len(chunk) != nbytes:
                raise ValueError("truncated index file")
            return chunk

        idx._vecs = np.frombuffer(take(4 * n * dim), "<f4").astype(np.float32).reshape(n, dim)
        idx._levels = np.frombuffer(take(4 * n), "<i4").astype(np.int32)
        idx._deleted = np.frombuffer(take(n), np.uint8).copy()
        p = idx.params
        idx._adj0 = np.zeros((n, p.m0), np.int64)
        idx._deg0 = np.zeros(n, np.int64)
        idx._upper_adj = np.zeros((n_upper, p.m), np.int64)
        idx._upper_deg = np.zeros(n_upper, np.int64)
        idx._upper_off = np.full(n, -1, np.int64)
        has = idx._levels > 0
        idx._upper_off[has] = np.concatenate(([0], np.cumsum(idx._levels[has])[:-1])) if has.any() else []
        idx.entry, idx.max_level, idx._batches = int(entry), int(max_level), int(batches)

        (blen,) = struct.unpack("<Q", take(8))
        base = np.frombuffer(take(blen), np.uint8)
        if _graph.decode_lists(base, np.arange(n, dtype=np.int64), idx._adj0, idx._deg0) < 0:
            raise ValueError("corrupt base-layer adjacency")
        (ulen,) = struct.unpack("<Q", take(8))
        upper = np.frombuffer(take(ulen), np.uint8)
        rows, owners = idx._upper_rows_by_level()
        adj = np.zeros((rows.shape[0], p.m), np.int64)
        deg = np.zeros(rows.shape[0], np.int64)
        if _graph.decode_lists(upper, owners, adj, deg) < 0:
            raise ValueError("corrupt upper-layer adjacency")
        idx._upper_adj[rows] = adj
        idx._upper_deg[rows] = deg
        return idx
