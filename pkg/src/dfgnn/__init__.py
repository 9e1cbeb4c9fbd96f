"""Dual-frequency unrolled graph neural network with GCN and MLP baselines."""

__version__ = "0.1.0"
