"""HNSW search with per-query adaptive ef from a Gaussian model of query distances."""
from adaef.core import Dataset, Metric, distance, exact_fdl
from adaef.data import SyntheticSpec, generate
from adaef.eftable import EfTable, build_table, estimate_ef, refresh_table
from adaef.hnsw import HnswIndex, HnswParams
from adaef.scoring import Decay, ScoringConfig
from adaef.stats import DatasetStats, compute_stats, estimate_fdl_params, merge_stats, remove_stats

__all__ = [
    "Dataset", "Metric", "distance", "exact_fdl",
    "SyntheticSpec", "generate",
    "EfTable", "build_table", "estimate_ef", "refresh_table",
    "HnswIndex", "HnswParams",
    "Decay", "ScoringConfig",
    "DatasetStats", "compute_stats", "estimate_fdl_params", "merge_stats", "remove_stats",
]

__version__ = "0.1.0"
