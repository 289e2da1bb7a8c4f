"""Synthetic Gaussian-cluster datasets with uniform or Zipfian cluster sizes."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from adaef.core import Dataset


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 200_000
    d: int = 64
    clusters: int = 256
    zipf_exponent: float = 1.0
    cluster_std: float = 0.05
    center_box: float = 1.0
    n_queries: int = 1000
    query_jitter: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive")
        if not 1 <= self.clusters <= self.n:
            raise ValueError("need 1 <= clusters <= n")
        if self.zipf_exponent < 0 or self.cluster_std < 0 or self.center_box <= 0:
            raise ValueError("invalid distribution parameters")
        if not 0 <= self.n_queries <= self.n:
            raise ValueError("n_queries must lie in [0, n]")

    @classmethod
    def uniform(cls, **kw) -> SyntheticSpec:
        return cls(zipf_exponent=0.0, **kw)

    @classmethod
    def from_json(cls, path: str | Path) -> SyntheticSpec:
        return cls(**json.loads(Path(path).read_text()))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)


def cluster_sizes(n: int, clusters: int, exponent: float) -> np.ndarray:
    """Sizes proportional to rank**-exponent, largest-remainder rounded, summing to n."""
    weights = np.arange(1, clusters + 1, dtype=np.float64) ** -exponent
    exact = n * weights / weights.sum()
    sizes = np.floor(exact).astype(np.int64)
    short = n - int(sizes.sum())
    # stable sort keeps ties on the lower rank
    order = np.argsort(-(exact - sizes), kind="stable")
    sizes[order[:short]] += 1
    return sizes


def generate(spec: SyntheticSpec) -> tuple[Dataset, np.ndarray]:
    """Dataset rows (shuffled) plus queries drawn uniformly from those rows."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    sizes = cluster_sizes(spec.n, spec.clusters, spec.zipf_exponent)
    centers = rng.uniform(-spec.center_box, spec.center_box, size=(spec.clusters, spec.d))
    labels = np.repeat(np.arange(spec.clusters), sizes)
    points = centers[labels] + rng.normal(0.0, spec.cluster_std, size=(spec.n, spec.d))
    perm = rng.permutation(spec.n)
    vectors = points[perm].astype(np.float32)
    picks = rng.choice(spec.n, size=spec.n_queries, replace=False)
    queries = vectors[picks].copy()
    if spec.query_jitter > 0:
        queries += rng.normal(0.0, spec.query_jitter, size=queries.shape).astype(np.float32)
    return Dataset(vectors), queries
