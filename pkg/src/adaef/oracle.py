"""Exact k-NN ground truth and recall.

Ties at equal distance go to the smaller id, both here and in the index, so
results are comparable id for id.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from adaef import _kernels
from adaef.core import Dataset, Metric, prepare_query, prepare_rows


@dataclass
class GroundTruth:
    ids: np.ndarray
    distances: np.ndarray

    def __post_init__(self) -> None:
        if np.unique(self.ids).size != self.ids.size:
            raise ValueError("ground-truth ids must be distinct")
        if np.any(np.diff(self.distances) < 0):
            raise ValueError("ground-truth distances must be non-decreasing")


def _topk_rows(qv, rows, live, metric: Metric, k: int) -> tuple[np.ndarray, np.ndarray]:
    if rows.shape[0] == 0:
        return np.empty(0, np.int64), np.empty(0)
    return _kernels.topk_ids(qv, rows, live, metric.code, min(k, rows.shape[0]))


def brute_force_topk(q, ds: Dataset | np.ndarray, metric: Metric | str, k: int) -> GroundTruth:
    """Exact top-k of ``ds`` (ids are the dataset's ids)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    metric = Metric.parse(metric)
    ds = ds if isinstance(ds, Dataset) else Dataset(ds)
    if ds.n == 0:
        return GroundTruth(np.empty(0, np.int64), np.empty(0))
    rows = prepare_rows(ds.vectors, metric)
    qv = prepare_query(q, metric, rows.shape[1])
    pos, dists = _topk_rows(qv, rows, np.ones(ds.n, np.uint8), metric, k)
    return GroundTruth(ds.ids[pos], dists)


def topk_by_sort(q, ds: Dataset | np.ndarray, metric: Metric | str, k: int) -> GroundTruth:
    """Same contract as :func:`brute_force_topk`, by a full lexicographic sort."""
    metric = Metric.parse(metric)
    ds = ds if isinstance(ds, Dataset) else Dataset(ds)
    rows = prepare_rows(ds.vectors, metric)
    qv = prepare_query(q, metric, rows.shape[1])
    d = _kernels.dist_many(qv, rows, metric.code)
    order = np.lexsort((ds.ids, d))[:k]
    return GroundTruth(ds.ids[order], d[order])


def index_topk(idx, q, k: int) -> GroundTruth:
    """Exact top-k over the live nodes of an index, in node ids."""
    qv = prepare_query(q, idx.metric, idx.dim)
    ids, dists = _topk_rows(qv, idx.vectors, idx.live_mask.astype(np.uint8), idx.metric, k)
    return GroundTruth(ids, dists)


def ground_truth(idx, queries, k: int) -> np.ndarray:
    """Exact top-k node ids for each query row; shape (nq, min(k, live))."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    live = idx.live_mask.astype(np.uint8)
    width = min(k, int(live.sum()))
    out = np.empty((queries.shape[0], width), dtype=np.int64)
    for j, q in enumerate(queries):
        qv = prepare_query(q, idx.metric, idx.dim)
        out[j] = _topk_rows(qv, idx.vectors, live, idx.metric, k)[0]
    return out


def recall_at_k(result, truth, k: int) -> float:
    truth = np.asarray(truth)
    if truth.shape[0] != k:
        raise ValueError(f"ground truth holds {truth.shape[0]} ids, expected k={k}")
    return len(set(np.asarray(result).tolist()) & set(truth.tolist())) / k
