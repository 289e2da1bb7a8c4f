"""Query difficulty score from quantile bins of the estimated distance distribution.

Bin ``i`` covers the estimated distance quantiles ``(delta*(i-1), delta*i]``.
The score is a decayed, normalized count of sampled distances per bin: close
to 100 when almost every sampled neighbor already lies in the first bin (an
easy query), near 0 when none of them reach the low quantiles.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from adaef.normal import norm_ppf
from adaef.stats import FdlParams


class Decay(enum.Enum):
    EXPONENTIAL = "exp"
    LINEAR = "linear"
    NONE = "none"

    @classmethod
    def parse(cls, value: str | Decay) -> Decay:
        if isinstance(value, Decay):
            return value
        for d in cls:
            if d.value == value.lower() or d.name.lower() == value.lower():
                return d
        raise ValueError(f"unknown decay {value!r}")


@dataclass(frozen=True)
class ScoringConfig:
    delta: float = 0.001
    m: int = 5
    decay: Decay = Decay.EXPONENTIAL

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("need at least one bin")
        if not 0.0 < self.delta * self.m < 0.5:
            raise ValueError("bins must cover less than half of the distribution")
        object.__setattr__(self, "decay", Decay.parse(self.decay))


@dataclass(frozen=True)
class QueryScore:
    thresholds: np.ndarray
    counts: np.ndarray
    score: float

    @property
    def group(self) -> int:
        return score_group(self.score)


def bin_thresholds(params: FdlParams, cfg: ScoringConfig) -> np.ndarray:
    if cfg.delta * cfg.m >= 1.0:
        raise ValueError("delta * m must be below 1")
    if not (math.isfinite(params.mu) and math.isfinite(params.sigma)):
        raise ValueError("distribution parameters must be finite")
    z = np.array([norm_ppf(cfg.delta * i) for i in range(1, cfg.m + 1)])
    return params.mu + params.sigma * z


def decay_weights(cfg: ScoringConfig) -> np.ndarray:
    i = np.arange(1, cfg.m + 1, dtype=np.float64)
    if cfg.decay is Decay.EXPONENTIAL:
        return 100.0 * np.exp(-i + 1)
    if cfg.decay is Decay.LINEAR:
        return 100.0 * (cfg.m - i + 1) / cfg.m
    # uniform weights that still sum to 100
    return np.full(cfg.m, 100.0 / cfg.m)


def bin_counts(sample, thresholds) -> np.ndarray:
    """``c_i = #{ theta_{i-1} < d <= theta_i }`` with theta_0 = -inf; beyond theta_m uncounted."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    d = np.asarray(sample, dtype=np.float64)
    slot = np.searchsorted(thresholds, d, side="left")
    return np.bincount(slot[slot < thresholds.shape[0]], minlength=thresholds.shape[0]).astype(np.int64)


def query_score(counts, weights, sample_size: int) -> float:
    if sample_size < 1:
        raise ValueError("empty distance sample")
    counts = np.asarray(counts, dtype=np.float64)
    return float(np.sum(np.asarray(weights) * counts / sample_size))


def score_sample(sample, params: FdlParams, cfg: ScoringConfig) -> QueryScore:
    """Thresholds, counts and score for a distance sample on the internal scale."""
    thresholds = bin_thresholds(params, cfg)
    counts = bin_counts(sample, thresholds)
    return QueryScore(thresholds, counts, query_score(counts, decay_weights(cfg), len(sample)))


def score_group(score: float) -> int:
    return max(int(math.floor(score)), 0)
