"""Exception taxonomy shared across the package."""


class AtomlithError(Exception):
    """Base class for every error raised by this package."""


class ParseError(AtomlithError):
    """An input document could not be parsed; the message names the offending
    location (JSON path or file:line)."""


class IntegrityError(AtomlithError):
    """Referential integrity between artifacts is violated (dangling ids,
    duplicates, missing embeddings)."""


class ConfigError(AtomlithError):
    """A configuration value or prompt template argument is invalid."""


class TransportError(AtomlithError):
    """HTTP-level failure: non-2xx status after retries, connection error,
    or timeout."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ProtocolError(AtomlithError):
    """A response arrived but does not match the expected wire format."""


class GenerationError(AtomlithError):
    """Text generation failed after retries for a specific item."""


class StageFailure(AtomlithError):
    """A pipeline stage failed; carries the stage name for the manifest."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
