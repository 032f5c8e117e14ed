"""Exception types shared across the package."""


class MvelaError(Exception):
    """Base class for all package errors."""


class ConfigError(MvelaError, ValueError):
    """Invalid configuration (malformed template, bad parameter, mismatched hash)."""


class DomainError(MvelaError, ValueError):
    """A point violates the declared search-space bounds."""


class DataError(MvelaError, ValueError):
    """Input data is unusable (empty, non-finite, wrong shape)."""


class CapabilityError(MvelaError, RuntimeError):
    """The request exceeds a hard implementation guard (e.g. enumeration size)."""


class StageError(MvelaError, RuntimeError):
    """A pipeline stage cannot run (missing inputs or stale upstream artifacts)."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"stage '{stage}': {message}")
