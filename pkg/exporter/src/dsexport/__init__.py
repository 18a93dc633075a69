"""Neutral binary dataset format exporter for public graph benchmarks."""

__version__ = "0.1.0"
