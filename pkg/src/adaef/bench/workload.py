"""Run query workloads against an index and collect per-query measurements."""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from adaef.bench.report import QueryRow, RunReport, SweepRow, percentile
from adaef.eftable import probe_ladder
from adaef.oracle import recall_at_k


def thread_count(default: int = 1) -> int:
    raw = os.environ.get("ADA_EF_THREADS")
    if not raw:
        return default
    try:
        return max(int(raw), 1)
    except ValueError:
        raise ValueError(f"ADA_EF_THREADS must be an integer, got {raw!r}") from None


def _map(fn, n: int, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def run_fixed(idx, queries, truth, k: int, ef: int, threads: int | None = None) -> RunReport:
    threads = thread_count() if threads is None else threads

    def one(i: int) -> QueryRow:
        t0 = time.perf_counter()
        res = idx.search_fixed(queries[i], k, ef)
        dt = (time.perf_counter() - t0) * 1000.0
        return QueryRow(i, recall_at_k(res.ids, truth[i][:k], k), dt, ef)

    rows = _map(one, len(queries), threads)
    return RunReport("fixed", k, rows, {"ef": ef})


def run_adaptive(idx, queries, truth, k: int, target: float, stats, table, cfg=None,
                 hops: int | None = None, threads: int | None = None) -> RunReport:
    threads = thread_count() if threads is None else threads
    cfg = cfg or table.cfg
    hops = table.hops if hops is None else hops

    def one(i: int) -> QueryRow:
        t0 = time.perf_counter()
        res = idx.adaptive_search(queries[i], k, target, stats, table, cfg, hops)
        dt = (time.perf_counter() - t0) * 1000.0
        return QueryRow(i, recall_at_k(res.ids, truth[i][:k], k), dt, res.ef, res.score, res.limit)

    rows = _map(one, len(queries), threads)
    params = {"target_recall": target, "delta": cfg.delta, "bins": cfg.m,
              "decay": cfg.decay.value, "hops": hops}
    return RunReport("adaptive", k, rows, params)


def ef_sweep(idx, queries, truth, k: int, stop_recall: float = 0.99, ef_cap: int = 5000,
             ladder: list[int] | None = None, threads: int | None = None) -> list[SweepRow]:
    """Fixed-ef runs up the ladder until mean recall reaches ``stop_recall`` or the cap."""
    rows = []
    for ef in ladder or probe_ladder(k, ef_cap):
        rep = run_fixed(idx, queries, truth, k, ef, threads)
        rec = rep.recalls
        rows.append(SweepRow(ef, float(rec.mean()), percentile(rec, 5), percentile(rec, 1),
                             rep.aggregates()["total_time_s"]))
        if rec.mean() >= stop_recall:
            break
    return rows


def smallest_ef_reaching(sweep: list[SweepRow], recall: float) -> int | None:
    for row in sweep:
        if row.mean_recall >= recall:
            return row.ef
    return None


def recall_array(report: RunReport) -> np.ndarray:
    return report.recalls
