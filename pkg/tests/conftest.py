"""Shared fixtures: small synthetic indexes for unit tests and cached desk-scale ones for acceptance."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pytest

import adaef
from adaef import oracle
from adaef.data import SyntheticSpec, generate
from adaef.eftable import build_table
from adaef.hnsw import HnswIndex, HnswParams
from adaef.stats import compute_stats

SRC = Path(adaef.__file__).parent
ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_spec() -> SyntheticSpec:
    return SyntheticSpec(n=3000, d=16, clusters=24, n_queries=100, seed=7)


@pytest.fixture(scope="session")
def small_data(small_spec):
    return generate(small_spec)


@pytest.fixture(scope="session")
def small_index(small_data) -> HnswIndex:
    ds, _ = small_data
    return HnswIndex.build(ds, HnswParams(m=8, ef_construction=64, seed=3))


@pytest.fixture(scope="session")
def small_truth(small_index, small_data) -> np.ndarray:
    _, queries = small_data
    return oracle.ground_truth(small_index, queries, 10)


# -- desk-scale artifacts -----------------------------------------------------

def _code_digest() -> str:
    h = hashlib.sha256()
    for name in ("_kernels.py", "_graph.py", "hnsw.py", "core.py", "data.py", "oracle.py"):
        h.update((SRC / name).read_bytes())
    return h.hexdigest()[:16]


class DeskCache:
    """Builds desk-scale indexes and ground truths once and keeps them in pytest's cache dir."""

    def __init__(self, root: Path) -> None:
        self.root = root
        self.code = _code_digest()

    def _dir(self, key: dict) -> Path:
        blob = json.dumps({**key, "code": self.code}, sort_keys=True).encode()
        d = self.root / hashlib.sha256(blob).hexdigest()[:20]
        d.mkdir(parents=True, exist_ok=True)
        return d

    def index(self, spec: SyntheticSpec, params: HnswParams, rows: int | None = None) -> HnswIndex:
        """Index over the first ``rows`` generated vectors (all of them by default)."""
        d = self._dir({"kind": "index", "spec": asdict(spec), "params": asdict(params), "rows": rows})
        path = d / "index.bin"
        if path.is_file():
            return HnswIndex.load(path)
        ds, _ = generate(spec)
        vecs = ds.vectors if rows is None else ds.vectors[:rows]
        idx = HnswIndex.build(vecs, params)
        idx.save(path)
        return idx

    def truth(self, tag: str, idx: HnswIndex, queries: np.ndarray, k: int) -> np.ndarray:
        digest = hashlib.sha256(idx.adjacency_bytes() + idx.live_mask.tobytes() + queries.tobytes()).hexdigest()
        d = self._dir({"kind": "truth", "tag": tag, "index": digest, "k": k})
        path = d / "truth.npy"
        if path.is_file():
            return np.load(path)
        gt = oracle.ground_truth(idx, queries, k)
        np.save(path, gt)
        return gt


@pytest.fixture(scope="session")
def desk_cache(request) -> DeskCache:
    return DeskCache(Path(request.config.cache.mkdir("adaef-desk")))


# -- desk-scale environments ----------------------------------------------------

DESK_PARAMS = HnswParams(m=16, ef_construction=200, seed=0)
DESK_K = 10


class DeskEnv:
    def __init__(self, cache: DeskCache, spec: SyntheticSpec, table_target: float = 0.99) -> None:
        self.spec = spec
        self.ds, self.queries = generate(spec)
        self.idx = cache.index(spec, DESK_PARAMS)
        self.truth = cache.truth("queries", self.idx, self.queries, DESK_K)
        self.stats = compute_stats(self.ds, self.idx.metric)
        self.table = build_table(self.idx, self.stats, sample_size=200, k=DESK_K, target_recall=table_target, seed=0)


@pytest.fixture(scope="session")
def zipf_env(desk_cache) -> DeskEnv:
    return DeskEnv(desk_cache, SyntheticSpec())


@pytest.fixture(scope="session")
def uniform_env(desk_cache) -> DeskEnv:
    return DeskEnv(desk_cache, SyntheticSpec.uniform())
