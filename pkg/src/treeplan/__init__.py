"""Hierarchical tree-search planning toolkit with policy learning in the loop."""

__version__ = "0.1.0"
