"""Conditional sales-distribution modeling and loan-level credit risk."""

__version__ = "0.1.0"
