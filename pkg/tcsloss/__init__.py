"""Topological cluster state loss simulator."""

__version__ = "0.3.0"
