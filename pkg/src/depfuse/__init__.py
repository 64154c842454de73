"""Dependency-parse ensembling and relational graph attention for aspect sentiment."""

__version__ = "0.1.0"
