"""Shared exception types, mapped to CLI exit codes and HTTP statuses."""


class SalesRiskError(Exception):
    """Base class for package errors."""


class SchemaError(SalesRiskError):
    """Invalid field schema or covariate layout."""


class DataError(SalesRiskError):
    """Bad input data (ingestion failures, shape mismatches)."""


class IngestError(DataError):
    """Unparseable cell during CSV ingestion; carries row/column context."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class UnseenLevelError(DataError):
    """Categorical level absent from the training-time level dictionary."""

    def __init__(self, field, level):
        super().__init__(f"unseen level {level!r} for field {field!r}")
        self.field = field
        self.level = level


class ParameterError(SalesRiskError):
    """Synthetic-model parameters violate a structural constraint."""


class FitError(SalesRiskError):
    """Model fitting failed to produce a usable estimate."""


class DomainError(SalesRiskError):
    """Argument outside its mathematical domain."""
