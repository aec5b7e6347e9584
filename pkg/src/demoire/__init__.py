"""Synthetic moire data, losses, metrics and a small two-stage demoireing network."""

__version__ = "0.1.0"
