"""Hierarchical Grow-When-Required networks for human-object interaction recognition."""

__version__ = "0.1.0"
