"""The ef-estimation table and the online ef lookup.

Offline, a uniform sample of stored vectors stands in for future queries.
Each proxy is scored exactly as a live query would be, proxies are grouped
by integer score, and every group is probed with plain fixed-ef searches on
an increasing ef ladder until its average recall reaches the build target
(or the ef cap).  The table keeps, per group, the probed ``(ef, recall)``
pairs plus the weighted average ef (WAE) across groups.

Online, a query's score selects a row; the first ef whose recall meets the
requested target is returned, floored at WAE.  If no rung meets the target
the row's largest ef is returned.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from adaef import _kernels, oracle
from adaef.core import Metric, prepare_query
from adaef.scoring import Decay, QueryScore, ScoringConfig, score_group, score_sample
from adaef.stats import DatasetStats, distance_params

FORMAT = "adaef-eftable"
VERSION = 1


@dataclass
class EfTable:
    groups: dict[int, list[tuple[int, float]]]
    wae: float
    build_target_recall: float
    build_k: int
    ef_cap: int
    sample_ids: np.ndarray
    group_sizes: dict[int, int] = field(default_factory=dict)
    truth: np.ndarray | None = None
    cfg: ScoringConfig = field(default_factory=ScoringConfig)
    hops: int = 2
    seed: int = 0
    refreshes: int = 0
    metric: Metric | None = None

    def for_target(self, r: float) -> EfTable:
        """The table as it would have been built for target ``r``.

        Rows are ladder prefixes that stop at the first rung meeting the
        build target, so for ``r`` at or below it only the WAE changes.
        Targets above the build target are served by this table unchanged.
        """
        if r >= self.build_target_recall or not self.group_sizes:
            return self
        return replace(self, wae=weighted_average_ef(self.groups, self.group_sizes, r))

    def to_json(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "build": {
                "k": self.build_k,
                "target_recall": self.build_target_recall,
                "ef_cap": self.ef_cap,
                "sample_size": int(len(self.sample_ids)),
                "seed": self.seed,
                "refreshes": self.refreshes,
                "hops": self.hops,
                "delta": self.cfg.delta,
                "bins": self.cfg.m,
                "decay": self.cfg.decay.value,
                "metric": self.metric.value if self.metric else None,
            },
            "wae": self.wae,
            "sample_ids": [int(i) for i in self.sample_ids],
            "ground_truth": None if self.truth is None else self.truth.tolist(),
            "groups": [
                {"score": key, "count": int(self.group_sizes.get(key, 0)),
                 "ef_recall": [[int(e), float(r)] for e, r in self.groups[key]]}
                for key in sorted(self.groups)
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def from_json(cls, doc: dict) -> EfTable:
        if doc.get("format") != FORMAT:
            raise ValueError("not an ef-estimation table")
        if doc.get("version") != VERSION:
            raise ValueError(f"unsupported table version {doc.get('version')}")
        b = doc["build"]
        groups = {int(g["score"]): [(int(e), float(r)) for e, r in g["ef_recall"]] for g in doc["groups"]}
        sizes = {int(g["score"]): int(g["count"]) for g in doc["groups"]}
        truth = doc.get("ground_truth")
        return cls(
            groups=groups, wae=float(doc["wae"]), build_target_recall=float(b["target_recall"]),
            build_k=int(b["k"]), ef_cap=int(b["ef_cap"]),
            sample_ids=np.asarray(doc["sample_ids"], dtype=np.int64), group_sizes=sizes,
            truth=None if truth is None else np.asarray(truth, dtype=np.int64),
            cfg=ScoringConfig(float(b["delta"]), int(b["bins"]), Decay.parse(b["decay"])),
            hops=int(b["hops"]), seed=int(b["seed"]), refreshes=int(b.get("refreshes", 0)),
            metric=Metric.parse(b["metric"]) if b.get("metric") else None,
        )

    @classmethod
    def load(cls, path: str | Path) -> EfTable:
        return cls.from_json(json.loads(Path(path).read_text()))


def probe_ladder(k: int, ef_cap: int) -> list[int]:
    """k, 1.25k, 1.5k, 2k, 3k, 4k, 5k, then +k steps; the cap closes the ladder."""
    if k > ef_cap:
        raise ValueError("k exceeds the ef cap")
    rungs = [k, math.ceil(1.25 * k), math.ceil(1.5 * k)]
    step = 2
    while step * k <= ef_cap:
        rungs.append(step * k)
        step += 1
    rungs = sorted({r for r in rungs if r <= ef_cap})
    if rungs[-1] < ef_cap:
        rungs.append(ef_cap)
    return rungs


def first_meeting(row: list[tuple[int, float]], r: float) -> int:
    """Smallest probed ef reaching ``r``; the largest probed ef otherwise."""
    for ef, rec in row:
        if rec >= r:
            return ef
    return row[-1][0]


def weighted_average_ef(groups: dict[int, list[tuple[int, float]]], sizes: dict[int, int], r: float) -> float:
    total = sum(sizes[key] for key in groups)
    if total == 0:
        return 0.0
    return sum(sizes[key] * first_meeting(row, r) for key, row in groups.items()) / total


def select_group(groups, score: float) -> int:
    """Row key for a score: its floor, else the nearest key (lower on ties)."""
    if not groups:
        raise ValueError("empty ef-estimation table")
    key = score_group(score)
    if key in groups:
        return key
    keys = sorted(groups)
    return min(keys, key=lambda g: (abs(g - key), g))


def lookup_ef(table: EfTable, score: float, r: float) -> int:
    """Row selection and scan for a score (the table half of the estimator)."""
    row = table.groups[select_group(table.groups, score)]
    ef = row[-1][0]
    for probe_ef, recall in row:
        if recall >= r:
            ef = max(probe_ef, table.wae)
            break
    return int(math.ceil(ef))


def score_query(q, sample, stats: DatasetStats, cfg: ScoringConfig) -> QueryScore:
    if len(sample) < 1:
        raise ValueError("empty distance sample")
    return score_sample(sample, distance_params(q, stats), cfg)


def estimate_ef(q, sample, r: float, stats: DatasetStats, table: EfTable, cfg: ScoringConfig | None = None) -> int:
    """ef for a query given its collected distance sample and a target recall ``r``."""
    if not 0.0 < r <= 1.0:
        raise ValueError("target recall must be in (0, 1]")
    if not table.groups:
        raise ValueError("empty ef-estimation table")
    qs = score_query(q, sample, stats, cfg or table.cfg)
    return lookup_ef(table.for_target(r), qs.score, r)


# -- construction -------------------------------------------------------------

def _proxy_scores(idx, stats: DatasetStats, cfg: ScoringConfig, sample_ids, hops: int) -> np.ndarray:
    scores = np.zeros(len(sample_ids))
    for j, node in enumerate(sample_ids):
        q = idx.vectors[node]
        sample, _, _ = idx.sample_distances(q, hops)
        scores[j] = score_query(q, sample, stats, cfg).score if len(sample) else 0.0
    return scores


def _probe(idx, sample_ids, truth, scores, k: int, target: float, ef_cap: int):
    keys = np.array([score_group(s) for s in scores])
    groups, sizes = {}, {}
    ladder = probe_ladder(k, ef_cap)
    for key in sorted(set(keys.tolist())):
        members = np.flatnonzero(keys == key)
        row = []
        for ef in ladder:
            rec = np.mean([
                oracle.recall_at_k(idx.search_fixed(idx.vectors[sample_ids[j]], k, ef).ids, truth[j], k)
                for j in members
            ])
            row.append((ef, float(rec)))
            if rec >= target:
                break
        groups[key] = row
        sizes[key] = int(members.size)
    return groups, sizes


def _assemble(idx, stats, cfg, sample_ids, truth, k, target, ef_cap, hops, seed, refreshes) -> EfTable:
    scores = _proxy_scores(idx, stats, cfg, sample_ids, hops)
    groups, sizes = _probe(idx, sample_ids, truth, scores, k, target, ef_cap)
    return EfTable(
        groups=groups, wae=weighted_average_ef(groups, sizes, target), build_target_recall=target,
        build_k=k, ef_cap=ef_cap, sample_ids=np.asarray(sample_ids, dtype=np.int64),
        group_sizes=sizes, truth=truth, cfg=cfg, hops=hops, seed=seed, refreshes=refreshes,
        metric=idx.metric,
    )


def _check_inputs(idx, stats: DatasetStats, k: int, ef_cap: int) -> None:
    if idx.live_count == 0:
        raise ValueError("cannot build a table over an empty index")
    if stats.metric is not idx.metric or stats.dim != idx.dim:
        raise ValueError("statistics do not match the index metric/dimension")
    if k > idx.live_count:
        raise ValueError("k exceeds the number of live vectors")
    if k > ef_cap:
        raise ValueError("k exceeds the ef cap")


def build_table(idx, stats: DatasetStats, cfg: ScoringConfig | None = None, sample_size: int = 200,
                k: int = 10, target_recall: float = 0.95, ef_cap: int = 5000, seed: int = 0,
                hops: int = 2) -> EfTable:
    cfg = cfg or ScoringConfig()
    _check_inputs(idx, stats, k, ef_cap)
    live = idx.live_ids()
    if not 1 <= sample_size <= live.size:
        raise ValueError(f"sample_size must be in [1, {live.size}]")
    rng = np.random.default_rng(seed)
    sample_ids = np.sort(rng.choice(live, size=sample_size, replace=False))
    truth = oracle.ground_truth(idx, idx.vectors[sample_ids], k)
    return _assemble(idx, stats, cfg, sample_ids, truth, k, target_recall, ef_cap, hops, seed, 0)


def update_truth(idx, sample_ids, truth, k: int, inserted=(), deleted=()) -> np.ndarray:
    """Maintain proxy top-k lists across a batch of inserts and/or deletes.

    Deleted ids are dropped and a row that falls below k is recomputed over
    the survivors; inserted ids are merged in by distance with the usual
    smaller-id tie break.
    """
    inserted = np.asarray(inserted, dtype=np.int64)
    deleted = set(np.asarray(deleted, dtype=np.int64).tolist())
    out = np.empty((len(sample_ids), k), dtype=np.int64)
    for j, node in enumerate(sample_ids):
        q = idx.vectors[node]
        row = [i for i in truth[j].tolist() if i not in deleted]
        if len(row) < k:
            row = oracle.index_topk(idx, q, k).ids.tolist()
        elif inserted.size:
            cand = np.concatenate([np.asarray(row, dtype=np.int64), inserted[idx.live_mask[inserted]]])
            qv = prepare_query(q, idx.metric, idx.dim)
            d = _kernels.dist_ids(qv, idx.vectors, cand, idx.metric.code)
            row = cand[np.lexsort((cand, d))[:k]].tolist()
        out[j] = row
    return out


def refresh_table(table: EfTable, idx, stats: DatasetStats, inserted=(), deleted=(),
                  cfg: ScoringConfig | None = None) -> EfTable:
    """Rebuild the table after an update using incrementally maintained proxy truths.

    ``stats`` must already describe the updated dataset.  Deleted proxies are
    replaced by fresh uniform draws from the live, unsampled ids.
    """
    cfg = cfg or table.cfg
    k = table.build_k
    _check_inputs(idx, stats, k, table.ef_cap)
    sample_ids = np.asarray(table.sample_ids, dtype=np.int64)
    if table.truth is None or np.shape(table.truth) != (sample_ids.size, k):
        raise ValueError("table carries no proxy ground truth to maintain")
    truth = np.asarray(table.truth, dtype=np.int64)
    refreshes = table.refreshes + 1
    keep = idx.live_mask[sample_ids]
    truth = update_truth(idx, sample_ids[keep], truth[keep], k, inserted, deleted)
    sample_ids = sample_ids[keep]
    missing = int((~keep).sum())
    if missing:
        pool = np.setdiff1d(idx.live_ids(), sample_ids)
        if pool.size < missing:
            raise ValueError("not enough live vectors to replace deleted proxies")
        rng = np.random.default_rng([table.seed, refreshes])
        fresh = np.sort(rng.choice(pool, size=missing, replace=False))
        sample_ids = np.concatenate([sample_ids, fresh])
        truth = np.concatenate([truth, oracle.ground_truth(idx, idx.vectors[fresh], k)])
    return _assemble(idx, stats, cfg, sample_ids, truth, k, table.build_target_recall,
                     table.ef_cap, table.hops, table.seed, refreshes)
