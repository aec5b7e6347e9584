"""Command line, dataset I/O and ablation drivers."""
