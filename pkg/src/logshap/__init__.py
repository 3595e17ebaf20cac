"""Shapley attribution of event-log meta-features to process discovery metrics."""

__version__ = "0.1.0"
