"""Parallel-in-time quantum optimal control by the intermediate state method."""

__version__ = "0.1.0"
