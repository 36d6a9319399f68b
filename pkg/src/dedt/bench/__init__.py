"""Benchmark tooling: synthetic sequences, OTB I/O and metrics."""
