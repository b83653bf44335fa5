"""Bridge between public GNN benchmarks / torch teachers and the bundle format."""

__version__ = "0.1.0"
