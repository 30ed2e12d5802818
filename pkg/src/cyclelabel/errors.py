class CycleLabelError(Exception):
    """Base class for all package errors."""


class ConfigError(CycleLabelError):
    """Invalid configuration (bad parameter combination, malformed spec file)."""


class DataError(CycleLabelError):
    """Input data violates a structural precondition (missing file, bad timestamps)."""


class DegenerateDataError(DataError):
    """Data is structurally fine but numerically unusable (e.g. all columns constant)."""
