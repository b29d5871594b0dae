"""Unsupervised recurring-pattern discovery and single-view geometry."""

__version__ = "0.1.0"
