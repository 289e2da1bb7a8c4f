"""Per-query run records, aggregate statistics and their CSV/JSON forms."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FIELDS = ("query", "recall", "latency_ms", "ef", "score", "limit")
UNCAPPED = "uncapped"


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: the ceil(p*n/100)-th smallest value."""
    vals = sorted(values)
    if not vals:
        raise ValueError("percentile of an empty list")
    if not 0 < p < 100:
        raise ValueError("p must lie in (0, 100)")
    rank = max(math.ceil(p * len(vals) / 100), 1)
    return float(vals[rank - 1])


@dataclass
class QueryRow:
    query: int
    recall: float
    latency_ms: float
    ef: int | None
    score: float | None = None
    limit: int | None = None


@dataclass
class RunReport:
    mode: str
    k: int
    rows: list[QueryRow]
    params: dict = field(default_factory=dict)

    @property
    def recalls(self) -> np.ndarray:
        return np.array([r.recall for r in self.rows])

    def aggregates(self) -> dict:
        rec = self.recalls
        efs = [r.ef for r in self.rows if r.ef is not None]
        hist = Counter(UNCAPPED if r.ef is None else str(r.ef) for r in self.rows)
        return {
            "mode": self.mode,
            "k": self.k,
            "n_queries": len(self.rows),
            "mean_recall": float(rec.mean()) if rec.size else float("nan"),
            "p5_recall": percentile(rec, 5) if rec.size else float("nan"),
            "p1_recall": percentile(rec, 1) if rec.size else float("nan"),
            "mean_ef": float(np.mean(efs)) if efs else None,
            "median_ef": float(np.median(efs)) if efs else None,
            "uncapped_queries": hist.get(UNCAPPED, 0),
            "total_time_s": float(sum(r.latency_ms for r in self.rows) / 1000.0),
            "ef_histogram": dict(sorted(hist.items(), key=lambda kv: (kv[0] == UNCAPPED, _num(kv[0])))),
            "params": self.params,
        }

    def write(self, out_dir: str | Path, stem: str | None = None) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.mode
        csv_path, json_path = out / f"{stem}_queries.csv", out / f"{stem}_summary.json"
        write_rows(csv_path, self.rows)
        json_path.write_text(json.dumps(self.aggregates(), indent=1))
        return csv_path, json_path

    @classmethod
    def read(cls, csv_path: str | Path, json_path: str | Path) -> RunReport:
        agg = json.loads(Path(json_path).read_text())
        return cls(agg["mode"], agg["k"], read_rows(csv_path), agg.get("params", {}))


def _num(s: str) -> float:
    try:
        return float(s)
    except ValueError:
        return math.inf


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path: str | Path, rows: list[QueryRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELDS)
        for r in rows:
            ef = UNCAPPED if r.ef is None else r.ef
            w.writerow([r.query, _fmt(r.recall), _fmt(r.latency_ms), ef, _fmt(r.score), _fmt(r.limit)])


def read_rows(path: str | Path) -> list[QueryRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(QueryRow(
                query=int(rec["query"]),
                recall=float(rec["recall"]),
                latency_ms=float(rec["latency_ms"]),
                ef=None if rec["ef"] == UNCAPPED else int(rec["ef"]),
                score=float(rec["score"]) if rec["score"] else None,
                limit=int(rec["limit"]) if rec["limit"] else None,
            ))
    return rows


@dataclass
class SweepRow:
    ef: int
    mean_recall: float
    p5_recall: float
    p1_recall: float
    total_time_s: float


def write_sweep(path: str | Path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ef", "mean_recall", "p5_recall", "p1_recall", "total_time_s"])
        for r in rows:
            w.writerow([r.ef, repr(r.mean_recall), repr(r.p5_recall), repr(r.p1_recall), repr(r.total_time_s)])


def read_sweep(path: str | Path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        return [SweepRow(int(r["ef"]), float(r["mean_recall"]), float(r["p5_recall"]),
                         float(r["p1_recall"]), float(r["total_time_s"])) for r in csv.DictReader(fh)]
