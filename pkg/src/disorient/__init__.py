"""Polarity analytics for social-media opinion streams: ingestion,
classification, daily instability tests and beta-kernel trend analysis."""

__version__ = "0.1.0"
