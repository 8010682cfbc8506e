"""Gravity-band knowledge graphs of bilateral trade, translational
embeddings, and tree / graph-network baselines built on them."""

__version__ = "0.1.0"
