"""gaitbench exceptions."""
from enum import Enum
from typing import Optional


class GaitBenchException(Exception):
    """Base gaitbench exception."""


class ConfigError(GaitBenchException):
    """Invalid configuration value."""

    def __init__(self, field: str, message: str) -> None:
        """Keep the offending field name for the CLI message."""
        self.field = field
        super().__init__(f'Invalid config field "{field}": {message}')


class DatasetError(GaitBenchException):
    """Dataset content or file error."""


class ChannelError(DatasetError):
    """Error tied to a single kinematic channel."""

    def __init__(self, channel: str, message: str) -> None:
        """Keep the channel name."""
        self.channel = channel
        super().__init__(f'{channel}: {message}')


class SplineError(GaitBenchException):
    """Spline resampling input error."""


class InfeasibleParameterError(GaitBenchException):
    """OCSVM parameters cannot be satisfied for the given sample count."""


class SolverError(GaitBenchException):
    """OCSVM dual solver did not converge."""

    def __init__(self, message: str, residual: float) -> None:
        """Keep the final KKT residual."""
        self.residual = residual
        super().__init__(f'{message} (KKT residual {residual:.3e})')


class SchemaErrorKind(Enum):
    NOT_JSON = 'not-json'
    MISSING_FIELD = 'missing-field'
    EXTRA_FIELD = 'extra-field'
    BAD_CLASS = 'bad-class'
    BAD_CONFIDENCE = 'bad-confidence'
    EMPTY_JUSTIFICATION = 'empty-justification'


class SchemaError(GaitBenchException):
    """LLM response does not follow the verdict schema."""

    def __init__(self, kind: SchemaErrorKind, message: str) -> None:
        """Keep the violation kind."""
        self.kind = kind
        super().__init__(f'{kind.value}: {message}')


class BackendError(GaitBenchException):
    """Terminal chat backend error."""


class BackendTransientError(BackendError):
    """Retryable chat backend error (timeouts, HTTP 5xx)."""


class MissingCredentialError(BackendError):
    """API credential is not available."""


class VerdictRetriesExhausted(GaitBenchException):
    """No schema-conformant verdict after all resubmissions."""

    def __init__(self, attempts: int, last_error: SchemaError, raw_response: Optional[str]) -> None:
        """Keep the last schema violation and raw text."""
        self.attempts = attempts
        self.last_error = last_error
        self.raw_response = raw_response
        super().__init__(f'No valid verdict after {attempts} attempts. Last error: {last_error}')


class ReportError(GaitBenchException):
    """Results bundle cannot be read."""

    def __init__(self, path: str, field: str, message: str) -> None:
        """Keep file and field."""
        self.path = path
        self.field = field
        super().__init__(f'{path}: field "{field}": {message}')


class MetricError(GaitBenchException):
    """Metric cannot be computed from the given predictions."""
