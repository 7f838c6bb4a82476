"""Temporal persistence encodings of EHR predictors for homelessness risk."""

__version__ = "0.1.0"
