"""Command-line pipeline: data generation, index/stats/table builds, workloads, updates and reports.

Every command reads and writes plain files (fvecs/ivecs, the binary index and
stats formats, JSON tables), so stages can be rerun independently.  On failure
a single ``error: {...}`` JSON line goes to stderr and the exit code is 1.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from adaef import oracle
from adaef.bench import plots
from adaef.bench.report import RunReport, read_sweep, write_sweep
from adaef.bench.workload import ef_sweep, run_adaptive, run_fixed, smallest_ef_reaching, thread_count
from adaef.core import DimensionMismatch, Metric
from adaef.data import SyntheticSpec, generate
from adaef.eftable import EfTable, build_table, refresh_table
from adaef.hnsw import HnswIndex, HnswParams
from adaef.scoring import Decay, ScoringConfig
from adaef.stats import DatasetStats, batch_stats, compute_stats, merge_stats, remove_stats
from adaef.vecio import load_fvecs, load_ivecs, save_fvecs, save_ivecs


class CliError(Exception):
    pass


def _need(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"missing {what}: {p}")
    return p


def _load_index(path) -> HnswIndex:
    return HnswIndex.load(_need(path, "index file"))


def _load_queries(path, idx: HnswIndex) -> np.ndarray:
    q = load_fvecs(_need(path, "query file"))
    if q.shape[0] == 0:
        raise CliError("query file holds no vectors")
    if q.shape[1] != idx.dim:
        raise DimensionMismatch(f"queries have dimension {q.shape[1]}, index has {idx.dim}")
    return q


def _load_truth(path, n_queries: int, k: int) -> np.ndarray:
    gt = load_ivecs(_need(path, "ground-truth file")).astype(np.int64)
    if gt.shape[0] != n_queries:
        raise CliError(f"ground truth has {gt.shape[0]} rows for {n_queries} queries")
    if gt.shape[1] < k:
        raise CliError(f"ground truth holds {gt.shape[1]} neighbors per query, need k={k}")
    return gt


def _load_stats(path, idx: HnswIndex) -> DatasetStats:
    stats = DatasetStats.load(_need(path, "stats file"))
    if stats.metric is not idx.metric:
        raise CliError(f"stats metric {stats.metric.value} does not match index metric {idx.metric.value}")
    if stats.dim != idx.dim:
        raise DimensionMismatch(f"stats dimension {stats.dim} does not match index dimension {idx.dim}")
    return stats


def _load_table(path, idx: HnswIndex) -> EfTable:
    table = EfTable.load(_need(path, "table file"))
    if table.metric is not None and table.metric is not idx.metric:
        raise CliError(f"table metric {table.metric.value} does not match index metric {idx.metric.value}")
    return table


def _scoring(args, base: ScoringConfig | None = None) -> ScoringConfig:
    base = base or ScoringConfig()
    return ScoringConfig(
        delta=base.delta if args.delta is None else args.delta,
        m=base.m if args.bins is None else args.bins,
        decay=base.decay if args.decay is None else Decay.parse(args.decay),
    )


def _emit(obj: dict) -> None:
    print(json.dumps(obj))


# -- commands -----------------------------------------------------------------

def cmd_gen(args) -> None:
    spec = SyntheticSpec.from_json(_need(args.spec, "spec file")) if args.spec else SyntheticSpec(
        n=args.n, d=args.d, clusters=args.clusters, zipf_exponent=args.zipf, cluster_std=args.std,
        center_box=args.box, n_queries=args.queries, query_jitter=args.jitter, seed=args.seed)
    ds, queries = generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_fvecs(out / "base.fvecs", ds.vectors)
    save_fvecs(out / "queries.fvecs", queries)
    (out / "spec.json").write_text(spec.to_json())
    _emit({"command": "gen", "n": spec.n, "d": spec.d, "queries": spec.n_queries, "out_dir": str(out)})


def cmd_build_index(args) -> None:
    data = load_fvecs(_need(args.data, "data file"))
    params = HnswParams(m=args.m, ef_construction=args.ef_construction, seed=args.seed)
    t0 = time.perf_counter()
    idx = HnswIndex.build(data, params, Metric.parse(args.metric))
    elapsed = time.perf_counter() - t0
    idx.save(args.out)
    _emit({"command": "build-index", "n": idx.n, "dim": idx.dim, "metric": idx.metric.value,
           "build_s": round(elapsed, 3), "out": args.out})


def cmd_stats(args) -> None:
    if args.index:
        idx = _load_index(args.index)
        stats = batch_stats(idx.vectors[idx.live_mask], idx.metric, idx.dim, prepared=True)
        if stats.n < 2:
            raise CliError("need at least two live vectors for statistics")
    else:
        stats = compute_stats(load_fvecs(_need(args.data, "data file")), Metric.parse(args.metric))
    stats.save(args.out)
    _emit({"command": "stats", "n": stats.n, "dim": stats.dim, "metric": stats.metric.value, "out": args.out})


def cmd_ground_truth(args) -> None:
    idx = _load_index(args.index)
    queries = _load_queries(args.queries, idx)
    gt = oracle.ground_truth(idx, queries, args.k)
    save_ivecs(args.out, gt.astype(np.int32))
    _emit({"command": "ground-truth", "queries": len(queries), "k": gt.shape[1], "out": args.out})


def cmd_build_table(args) -> None:
    idx = _load_index(args.index)
    stats = _load_stats(args.stats, idx)
    t0 = time.perf_counter()
    table = build_table(idx, stats, _scoring(args), sample_size=args.sample_size, k=args.k,
                        target_recall=args.target_recall, ef_cap=args.ef_cap, seed=args.seed, hops=args.hops)
    elapsed = time.perf_counter() - t0
    table.save(args.out)
    _emit({"command": "build-table", "groups": len(table.groups), "wae": table.wae,
           "build_s": round(elapsed, 3), "out": args.out})


def cmd_search_fixed(args) -> None:
    idx = _load_index(args.index)
    queries = _load_queries(args.queries, idx)
    truth = _load_truth(args.gt, len(queries), args.k)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    threads = thread_count()
    if args.ef_sweep:
        rows = ef_sweep(idx, queries, truth, args.k, args.sweep_stop, args.ef_cap, threads=threads)
        write_sweep(out / "sweep.csv", rows)
        _emit({"command": "search-fixed", "sweep_rungs": len(rows), "last_ef": rows[-1].ef,
               "last_mean_recall": rows[-1].mean_recall, "out": str(out / "sweep.csv")})
        return
    if args.ef is None:
        raise CliError("search-fixed needs --ef or --ef-sweep")
    rep = run_fixed(idx, queries, truth, args.k, args.ef, threads)
    csv_path, json_path = rep.write(out, args.name or f"fixed_ef{args.ef}")
    agg = rep.aggregates()
    _emit({"command": "search-fixed", "mean_recall": agg["mean_recall"], "p5_recall": agg["p5_recall"],
           "p1_recall": agg["p1_recall"], "csv": str(csv_path), "json": str(json_path)})


def cmd_search_ada(args) -> None:
    idx = _load_index(args.index)
    stats = _load_stats(args.stats, idx)
    table = _load_table(args.table, idx)
    queries = _load_queries(args.queries, idx)
    truth = _load_truth(args.gt, len(queries), args.k)
    cfg = _scoring(args, table.cfg)
    hops = table.hops if args.hops is None else args.hops
    rep = run_adaptive(idx, queries, truth, args.k, args.target_recall, stats, table, cfg, hops, thread_count())
    stem = args.name or f"ada_r{args.target_recall:g}"
    csv_path, json_path = rep.write(args.out_dir, stem)
    agg = rep.aggregates()
    _emit({"command": "search-ada", "mean_recall": agg["mean_recall"], "p5_recall": agg["p5_recall"],
           "p1_recall": agg["p1_recall"], "mean_ef": agg["mean_ef"], "csv": str(csv_path), "json": str(json_path)})


def cmd_update(args) -> None:
    idx = _load_index(args.index)
    stats = _load_stats(args.stats, idx)
    table = _load_table(args.table, idx)
    if not args.insert and not args.delete:
        raise CliError("update needs --insert and/or --delete")
    inserted = np.empty(0, dtype=np.int64)
    deleted = np.empty(0, dtype=np.int64)
    removed_rows = None
    if args.delete:
        deleted = np.unique(load_ivecs(_need(args.delete, "delete-id file")).astype(np.int64).ravel())
        if deleted.size and (deleted.min() < 0 or deleted.max() >= idx.n):
            raise CliError("delete ids fall outside the index")
        deleted = deleted[idx.live_mask[deleted]]
        removed_rows = idx.vectors[deleted].copy()
        idx.delete(deleted)
    new_rows = None
    if args.insert:
        new_rows = load_fvecs(_need(args.insert, "insert file"))
        if new_rows.shape[0] and new_rows.shape[1] != idx.dim:
            raise DimensionMismatch(f"insert batch has dimension {new_rows.shape[1]}, index has {idx.dim}")
        if new_rows.shape[0]:
            inserted = idx.insert(new_rows)

    if args.mode == "stale":
        new_stats, new_table = stats, table
    elif args.mode == "incremental":
        new_stats = stats
        if removed_rows is not None and len(removed_rows):
            new_stats = remove_stats(new_stats, batch_stats(removed_rows, idx.metric, idx.dim, prepared=True))
        if new_rows is not None and len(new_rows):
            new_stats = merge_stats(new_stats, batch_stats(new_rows, idx.metric, idx.dim))
        new_table = refresh_table(table, idx, new_stats, inserted, deleted)
    else:
        new_stats = batch_stats(idx.vectors[idx.live_mask], idx.metric, idx.dim, prepared=True)
        new_table = build_table(idx, new_stats, table.cfg, sample_size=len(table.sample_ids), k=table.build_k,
                                target_recall=table.build_target_recall, ef_cap=table.ef_cap,
                                seed=table.seed, hops=table.hops)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    idx.save(out / "index.bin")
    new_stats.save(out / "stats.bin")
    new_table.save(out / "table.json")
    _emit({"command": "update", "mode": args.mode, "inserted": int(inserted.size), "deleted": int(deleted.size),
           "live": idx.live_count, "out_dir": str(out)})


def cmd_report(args) -> None:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise CliError(f"missing run directory: {run_dir}")
    runs = {}
    for json_path in sorted(run_dir.glob("*_summary.json")):
        stem = json_path.name[: -len("_summary.json")]
        csv_path = run_dir / f"{stem}_queries.csv"
        if csv_path.is_file():
            runs[stem] = RunReport.read(csv_path, json_path)
    sweep_path = run_dir / "sweep.csv"
    sweep = read_sweep(sweep_path) if sweep_path.is_file() else []
    if not runs and not sweep:
        raise CliError(f"no run outputs found in {run_dir}")

    out = Path(args.out_dir) if args.out_dir else run_dir
    out.mkdir(parents=True, exist_ok=True)
    figures = []
    summary = []
    for stem, rep in runs.items():
        agg = rep.aggregates()
        agg["name"] = stem
        if sweep and rep.mode == "adaptive":
            agg["sweep_ef_for_same_recall"] = smallest_ef_reaching(sweep, agg["mean_recall"])
        summary.append(agg)
        if rep.mode == "adaptive":
            figures.append(plots.ef_histogram(rep, out / f"{stem}_ef_hist.png"))
    if runs:
        figures.append(plots.recall_cdf(runs, out / "recall_cdf.png"))
    if sweep:
        marks = {name: (r.aggregates()["mean_ef"], r.aggregates()["mean_recall"])
                 for name, r in runs.items() if r.mode == "adaptive" and r.aggregates()["mean_ef"]}
        figures.append(plots.sweep_curve(sweep, out / "sweep.png", marks))

    cols = ["name", "mode", "k", "n_queries", "mean_recall", "p5_recall", "p1_recall", "mean_ef",
            "median_ef", "uncapped_queries", "total_time_s", "sweep_ef_for_same_recall"]
    lines = [",".join(cols)]
    for agg in summary:
        lines.append(",".join("" if agg.get(c) is None else str(agg.get(c)) for c in cols))
    (out / "report.csv").write_text("\n".join(lines) + "\n")
    (out / "report.json").write_text(json.dumps({"runs": summary, "sweep": [vars(r) for r in sweep]}, indent=1))
    _emit({"command": "report", "runs": len(runs), "sweep_rungs": len(sweep),
           "figures": [str(f) for f in figures], "csv": str(out / "report.csv")})


# -- parser -------------------------------------------------------------------

def _scoring_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, help="quantile width per bin (default 0.001)")
    p.add_argument("--bins", type=int, help="number of bins (default 5)")
    p.add_argument("--decay", choices=[d.value for d in Decay], help="bin weight decay (default exp)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaef", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic clustered dataset and queries")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--spec", help="JSON generator spec (overrides the flags below)")
    d = SyntheticSpec()
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--d", type=int, default=d.d)
    p.add_argument("--clusters", type=int, default=d.clusters)
    p.add_argument("--zipf", type=float, default=d.zipf_exponent, help="cluster size exponent, 0 = uniform")
    p.add_argument("--std", type=float, default=d.cluster_std)
    p.add_argument("--box", type=float, default=d.center_box)
    p.add_argument("--queries", type=int, default=d.n_queries)
    p.add_argument("--jitter", type=float, default=d.query_jitter)
    p.add_argument("--seed", type=int, default=d.seed)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build-index", help="build an HNSW index from an fvecs file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metric", default="cos_dist", help="ip, cos_sim or cos_dist")
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--ef-construction", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("stats", help="compute dataset mean and covariance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="fvecs file")
    src.add_argument("--index", help="use the live vectors of an index")
    p.add_argument("--metric", default="cos_dist")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("ground-truth", help="exact top-k over the live index vectors")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ground_truth)

    p = sub.add_parser("build-table", help="build the ef-estimation table")
    p.add_argument("--index", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--target-recall", type=float, default=0.95)
    p.add_argument("--sample-size", type=int, default=200)
    p.add_argument("--ef-cap", type=int, default=5000)
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    _scoring_flags(p)
    p.set_defaults(func=cmd_build_table)

    p = sub.add_parser("search-fixed", help="fixed-ef workload or ef sweep")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--k", type=int, default=10)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--ef", type=int)
    mode.add_argument("--ef-sweep", action="store_true", help="climb the ef ladder until --sweep-stop or --ef-cap")
    p.add_argument("--sweep-stop", type=float, default=0.99)
    p.add_argument("--ef-cap", type=int, default=5000)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--name", help="output file stem")
    p.set_defaults(func=cmd_search_fixed)

    p = sub.add_parser("search-ada", help="adaptive-ef workload")
    p.add_argument("--index", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--target-recall", type=float, default=0.95)
    p.add_argument("--hops", type=int, help="hops bounding the distance sample (default: the table's)")
    _scoring_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--name", help="output file stem")
    p.set_defaults(func=cmd_search_ada)

    p = sub.add_parser("update", help="apply an insert/delete batch")
    p.add_argument("--index", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--insert", help="fvecs batch to insert")
    p.add_argument("--delete", help="ivecs file of node ids to delete")
    p.add_argument("--mode", choices=["stale", "incremental", "recompute"], default="incremental")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("report", help="aggregate a run directory and render figures")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out-dir", help="defaults to the run directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one machine-readable line
        line = {"command": args.command, "error": type(exc).__name__, "message": str(exc)}
        print("error: " + json.dumps(line), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
