"""Exception types shared across the package."""


class ForceDecompError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ForceDecompError, ValueError):
    """An input value violates a documented precondition."""


class UnitMismatchError(ValidationError):
    """Arithmetic attempted between vectors with incompatible unit tags."""


class DegenerateDirectionError(ValidationError):
    """A direction was requested from a zero-length vector."""


class GeometryError(ValidationError):
    """Grasp geometry cannot support the requested computation."""


class ConfigError(ValidationError):
    """A configuration object is invalid."""


class SamplingError(ValidationError):
    """A stream is too short or not uniformly sampled."""


class AlignmentError(ValidationError):
    """Streams that must be aligned sample-for-sample are not."""


class EmptyInputError(ValidationError):
    """An aggregate was requested over no samples."""


class StreamMissingError(ForceDecompError):
    """A stream required by the requested operation is absent."""

    def __init__(self, stream: str, detail: str = ""):
        self.stream = stream
        msg = f"required stream {stream!r} is missing"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class InstabilityError(ForceDecompError):
    """The simulator state diverged."""


class ParseError(ValidationError):
    """A trial file line could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class VersionError(ParseError):
    """A trial file declares an unsupported schema version."""
