"""Dataset statistics and the Gaussian model of a query's full distance list.

For a query ``q`` the inner products ``q . v`` over the dataset have mean
``q . M`` and variance ``q Sigma q^T`` where ``M`` is the column mean and
``Sigma`` the column covariance.  Cosine metrics use the same identities on
unit-normalized query and rows; cosine distance shifts the mean to
``1 - mu`` and keeps the variance.

Mean and covariance support batch merge and batch removal so they can track
inserts and deletes without a full rescan.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from adaef.core import Dataset, DimensionMismatch, Metric, prepare_query, prepare_rows

MAGIC = b"ADAEFSTA"
VERSION = 1
_HEADER = struct.Struct("<8sIIQBB")


@dataclass(frozen=True)
class DatasetStats:
    mean: np.ndarray
    cov: np.ndarray
    n: int
    metric: Metric
    normalized: bool

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, self.dim, self.n, self.metric.code, int(self.normalized)))
            fh.write(np.ascontiguousarray(self.mean, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.cov, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> DatasetStats:
        data = Path(path).read_bytes()
        if len(data) < _HEADER.size:
            raise ValueError("truncated stats file")
        magic, version, d, n, code, normalized = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValueError("not a stats snapshot (bad magic)")
        if version != VERSION:
            raise ValueError(f"unsupported stats snapshot version {version}")
        expected = _HEADER.size + 8 * (d + d * d)
        if len(data) != expected:
            raise ValueError(f"stats file has {len(data)} bytes, expected {expected}")
        body = np.frombuffer(data, "<f8", offset=_HEADER.size).astype(np.float64)
        return cls(body[:d].copy(), body[d:].reshape(d, d).copy(), n, Metric.from_code(code), bool(normalized))


@dataclass(frozen=True)
class FdlParams:
    mu: float
    sigma: float


def _rows(ds, metric: Metric, prepared: bool = False) -> np.ndarray:
    vectors = ds.vectors if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float32)
    if vectors.ndim == 1 and vectors.size == 0:
        vectors = vectors.reshape(0, 0)
    if prepared:
        return np.asarray(vectors, dtype=np.float64)
    # cosine stats are over the same float32 unit rows the distance kernel sees
    return prepare_rows(vectors, metric).astype(np.float64)


def batch_stats(ds, metric: Metric | str, dim: int | None = None, prepared: bool = False) -> DatasetStats:
    """Statistics of any batch, including n = 0 and n = 1 (zero covariance).

    ``prepared=True`` takes rows as already stored by an index (unit-normalized
    for cosine metrics), so removing stored rows matches the original batch bit for bit.
    """
    metric = Metric.parse(metric)
    rows = _rows(ds, metric, prepared)
    n, d = rows.shape
    if dim is not None and n and d != dim:
        raise DimensionMismatch(f"batch has dimension {d}, expected {dim}")
    d = dim if (n == 0 and dim is not None) else d
    if n == 0:
        return DatasetStats(np.zeros(d), np.zeros((d, d)), 0, metric, metric.is_cosine)
    mean = rows.mean(axis=0)
    if n == 1:
        cov = np.zeros((d, d))
    else:
        centered = rows - mean
        cov = centered.T @ centered / (n - 1)
        cov = (cov + cov.T) / 2
    return DatasetStats(mean, cov, n, metric, metric.is_cosine)


def compute_stats(ds, metric: Metric | str) -> DatasetStats:
    """Column mean and sample (n - 1) covariance, accumulated in float64."""
    vectors = ds.vectors if isinstance(ds, Dataset) else np.asarray(ds)
    if vectors.shape[0] < 2:
        raise ValueError("need at least two rows for a sample covariance")
    return batch_stats(ds, metric)


def _check_compatible(a: DatasetStats, b: DatasetStats) -> None:
    if a.dim != b.dim:
        raise DimensionMismatch(f"stats dimensions differ: {a.dim} vs {b.dim}")
    if a.metric is not b.metric or a.normalized != b.normalized:
        raise ValueError("stats were computed for different metrics")


def merge_stats(a: DatasetStats, b: DatasetStats) -> DatasetStats:
    """Statistics of the union of two disjoint batches."""
    _check_compatible(a, b)
    if b.n == 0:
        return a
    if a.n == 0:
        return b
    n = a.n + b.n
    mean = (a.n * a.mean + b.n * b.mean) / n
    diff = a.mean - b.mean
    scatter = (a.n - 1) * a.cov + (b.n - 1) * b.cov + (a.n * b.n / n) * np.outer(diff, diff)
    cov = scatter / (n - 1) if n > 1 else np.zeros_like(a.cov)
    return DatasetStats(mean, cov, n, a.metric, a.normalized)


def remove_stats(total: DatasetStats, removed: DatasetStats) -> DatasetStats:
    """Statistics after deleting ``removed`` (a subset) from ``total``."""
    _check_compatible(total, removed)
    if removed.n == 0:
        return total
    if removed.n >= total.n:
        raise ValueError("cannot remove as many rows as the total holds")
    n = total.n - removed.n
    if n < 2:
        raise ValueError("fewer than two rows would remain")
    mean = (total.n * total.mean - removed.n * removed.mean) / n
    diff = total.mean - removed.mean
    scatter = (total.n - 1) * total.cov - (removed.n - 1) * removed.cov \
        - (removed.n * total.n / n) * np.outer(diff, diff)
    return DatasetStats(mean, scatter / (n - 1), n, total.metric, total.normalized)


def estimate_fdl_params(q, stats: DatasetStats) -> FdlParams:
    """Mean and standard deviation of the query's full distance list, in the metric's native sign."""
    qv = prepare_query(q, stats.metric, stats.dim).astype(np.float64)
    mu = float(qv @ stats.mean)
    var = float(qv @ stats.cov @ qv)
    sigma = float(np.sqrt(max(var, 0.0)))
    if stats.metric is Metric.COSINE_DISTANCE:
        mu = 1.0 - mu
    return FdlParams(mu, sigma)


def distance_params(q, stats: DatasetStats) -> FdlParams:
    """The same Gaussian expressed on the internal smaller-is-closer scale."""
    p = estimate_fdl_params(q, stats)
    if stats.metric is Metric.COSINE_DISTANCE:
        return p
    return FdlParams(-p.mu, p.sigma)
