"""Synthetic brick walls, baked surface maps, and a boosted-cascade detector."""

__version__ = "0.1.0"
