"""Figures rendered next to a run's CSV/JSON output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from adaef.bench.report import RunReport, SweepRow  # noqa: E402

STYLE = {
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "figure.figsize": (5.0, 3.4),
    "savefig.dpi": 120,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def recall_cdf(reports: dict[str, RunReport], path: str | Path) -> Path:
    """Empirical CDF of per-query recall, one line per labelled run."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, rep in reports.items():
            rec = np.sort(rep.recalls)
            frac = np.arange(1, rec.size + 1) / rec.size
            ax.step(rec, frac, where="post", label=label)
        ax.set_xlabel(f"recall@{next(iter(reports.values())).k}" if reports else "recall")
        ax.set_ylabel("fraction of queries")
        ax.set_xlim(-0.02, 1.02)
        if reports:
            ax.legend(loc="upper left")
        return _save(fig, Path(path))


def ef_histogram(report: RunReport, path: str | Path) -> Path:
    """Histogram of assigned ef values on log-spaced bins (uncapped queries noted in the title)."""
    efs = np.array([r.ef for r in report.rows if r.ef is not None], dtype=float)
    uncapped = sum(r.ef is None for r in report.rows)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if efs.size:
            lo, hi = efs.min(), efs.max()
            bins = np.geomspace(lo, hi * 1.0001, 30) if hi > lo else [lo - 0.5, lo + 0.5]
            ax.hist(efs, bins=bins, color="C0")
            if hi > lo:
                ax.set_xscale("log")
        ax.set_xlabel("assigned ef")
        ax.set_ylabel("queries")
        ax.set_title(f"{report.mode}, {len(report.rows)} queries, {uncapped} uncapped", fontsize=9)
        return _save(fig, Path(path))


def sweep_curve(rows: list[SweepRow], path: str | Path, marks: dict[str, tuple[float, float]] | None = None) -> Path:
    """Recall statistics against ef for a fixed-ef sweep; ``marks`` adds labelled (ef, recall) points."""
    ef = [r.ef for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(ef, [r.mean_recall for r in rows], "o-", label="mean")
        ax.plot(ef, [r.p5_recall for r in rows], "s--", label="P5")
        ax.plot(ef, [r.p1_recall for r in rows], "^:", label="P1")
        for label, (x, y) in (marks or {}).items():
            ax.plot([x], [y], "k*", ms=9)
            ax.annotate(label, (x, y), textcoords="offset points", xytext=(4, -10), fontsize=8)
        ax.set_xscale("log")
        ax.set_xlabel("ef")
        ax.set_ylabel("recall")
        ax.legend(loc="lower right")
        return _save(fig, Path(path))
