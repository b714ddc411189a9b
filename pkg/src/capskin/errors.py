"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a model is defined."""


class RankError(DomainError):
    """A least-squares design matrix is rank deficient."""


class CalibrationError(RuntimeError):
    """Press-release data cannot be turned into an invertible force map."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    """Invalid run configuration. ``where`` names the offending field or line."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


class DataError(ValueError):
    """Malformed input data (CSV rows, frame logs)."""
