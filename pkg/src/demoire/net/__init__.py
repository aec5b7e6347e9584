"""Numpy autodiff, the two-stage demoireing network and its trainer."""
