"""Value-of-computation planning: beliefs, search graphs, meta-policies, benchmarks."""

__version__ = "0.1.0"
