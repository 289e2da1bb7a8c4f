"""Benchmark workloads, reports and the command-line pipeline."""
