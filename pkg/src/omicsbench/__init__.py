"""Benchmarking deep multi-omics integration methods for drug response."""

__version__ = "0.1.0"
