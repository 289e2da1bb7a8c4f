"""Vector types, metrics and the exact full-distance-list computation.

Every metric is mapped onto a single "smaller is closer" scale so that the
graph search needs one comparator:

* ``InnerProduct``      -> ``-(q . v)``
* ``CosineSimilarity``  -> ``-(q^ . v^)``
* ``CosineDistance``    -> ``1 - (q^ . v^)``

Vectors are stored as float32.  Dot products accumulate in float64, and the
same compiled kernel is used by the index, the brute-force oracle and
:func:`exact_fdl`, so all three agree bit for bit.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from adaef import _kernels


class Metric(enum.Enum):
    INNER_PRODUCT = "ip"
    COSINE_SIMILARITY = "cos_sim"
    COSINE_DISTANCE = "cos_dist"

    @property
    def code(self) -> int:
        return _METRIC_CODES[self]

    @property
    def is_cosine(self) -> bool:
        return self is not Metric.INNER_PRODUCT

    @classmethod
    def from_code(cls, code: int) -> Metric:
        for metric, c in _METRIC_CODES.items():
            if c == code:
                return metric
        raise ValueError(f"unknown metric code {code}")

    @classmethod
    def parse(cls, value: str | Metric) -> Metric:
        if isinstance(value, Metric):
            return value
        aliases = {
            "ip": cls.INNER_PRODUCT,
            "inner_product": cls.INNER_PRODUCT,
            "cos_sim": cls.COSINE_SIMILARITY,
            "cosine_similarity": cls.COSINE_SIMILARITY,
            "cs": cls.COSINE_SIMILARITY,
            "cos_dist": cls.COSINE_DISTANCE,
            "cosine_distance": cls.COSINE_DISTANCE,
            "cosine": cls.COSINE_DISTANCE,
            "cd": cls.COSINE_DISTANCE,
        }
        try:
            return aliases[value.lower()]
        except KeyError:
            raise ValueError(f"unknown metric {value!r}") from None


_METRIC_CODES = {
    Metric.INNER_PRODUCT: _kernels.IP,
    Metric.COSINE_SIMILARITY: _kernels.CS,
    Metric.COSINE_DISTANCE: _kernels.CD,
}


class DimensionMismatch(ValueError):
    pass


class ZeroNormVector(ValueError):
    pass


def as_vector(v, dim: int | None = None) -> np.ndarray:
    """Validate a single vector and return it as a contiguous float32 array."""
    arr = np.ascontiguousarray(v, dtype=np.float32)
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise ValueError(f"expected a non-empty 1-d vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"vector has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector contains NaN or Inf")
    return arr


def as_matrix(x, dim: int | None = None) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float32)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, dim or 0)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatch(f"rows have dimension {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix contains NaN or Inf")
    return arr


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """L2-normalize rows (norm taken in float64), returning float32.

    Raises:
        ZeroNormVector: if any row has zero norm.
    """
    x64 = np.asarray(x, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", x64, x64))
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise ZeroNormVector(f"zero-norm row at position {int(bad[0])} under a cosine metric")
    return np.ascontiguousarray((x64 / norms[:, None]).astype(np.float32))


def prepare_rows(x, metric: Metric, dim: int | None = None) -> np.ndarray:
    """Rows in the form the distance kernel consumes (unit length for cosine)."""
    arr = as_matrix(x, dim)
    if metric.is_cosine and arr.shape[0]:
        return normalize_rows(arr)
    return arr


def prepare_query(q, metric: Metric, dim: int | None = None) -> np.ndarray:
    arr = as_vector(q, dim)
    if metric.is_cosine:
        return normalize_rows(arr[None, :])[0]
    return arr


@dataclass
class Dataset:
    """An n x d float32 matrix with stable integer ids per row."""

    vectors: np.ndarray
    ids: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        vecs = np.asarray(self.vectors)
        if vecs.ndim == 1 and vecs.size == 0:
            vecs = vecs.reshape(0, 0)
        self.vectors = as_matrix(vecs)
        n = self.vectors.shape[0]
        if self.ids is None:
            self.ids = np.arange(n, dtype=np.int64)
        else:
            self.ids = np.asarray(self.ids, dtype=np.int64)
            if self.ids.shape != (n,):
                raise ValueError("ids must have one entry per row")
            if np.unique(self.ids).size != n:
                raise ValueError("ids must be unique")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.n

    def subset(self, rows) -> Dataset:
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.vectors[rows], self.ids[rows])


def distance(q, v, metric: Metric | str) -> float:
    """Distance between two vectors on the internal smaller-is-closer scale."""
    metric = Metric.parse(metric)
    q = as_vector(q)
    v = as_vector(v, q.shape[0])
    if metric.is_cosine:
        both = normalize_rows(np.stack([q, v]))
        q, v = both[0], both[1]
    return float(_kernels.dist(q, v, metric.code))


def native_value(d: float | np.ndarray, metric: Metric):
    """Map an internal distance back to the metric's own sign convention."""
    if metric is Metric.COSINE_DISTANCE:
        return d
    return -d


def exact_fdl(q, ds: Dataset | np.ndarray, metric: Metric | str) -> np.ndarray:
    """Full distance list: the internal distance from ``q`` to every row, in row order."""
    metric = Metric.parse(metric)
    rows = ds.vectors if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float32)
    if rows.shape[0] == 0:
        return np.empty(0, dtype=np.float64)
    rows = prepare_rows(rows, metric)
    qv = prepare_query(q, metric, rows.shape[1])
    return _kernels.dist_many(qv, rows, metric.code)
