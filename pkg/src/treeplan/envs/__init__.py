"""Deterministic desk-scale environments exercising every planner feature."""

from .checkerboard import CheckerboardWorld, make_checkerboard

__all__ = [
    "CheckerboardWorld",
    "make_checkerboard",
]
