"""Pipeline errors.

Every failure carries an exit code and a human readable detail, the same way an
HTTP error carries a status code. Commands let these propagate; click prints
the detail and exits with the code.
"""

from typing import Optional

import click

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISSING_INPUT = 2
EXIT_NUMERICAL = 3


class PipelineError(click.ClickException):
    """Base error of the pipeline."""

    exit_code = EXIT_USAGE

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail

    def __str__(self) -> str:
        return self.detail


class UsageError(PipelineError):
    """Invalid call: bad arguments, wrong order of operations."""


class ConfigurationError(UsageError):
    """Invalid configuration or incompatible network dimensions."""


class DimensionError(UsageError):
    """Array dimensions disagree with the owning domain or model."""


class UnsupportedMetricError(UsageError):
    """The requested metric is undefined for the domain pair."""


class MissingInputError(PipelineError):
    """A required dataset or snapshot does not exist."""

    exit_code = EXIT_MISSING_INPUT


class ParseError(PipelineError):
    """A file could not be parsed."""

    exit_code = EXIT_MISSING_INPUT

    def __init__(self, detail: str, line_number: Optional[int] = None):
        if line_number is not None:
            detail = f"line {line_number}: {detail}"
        super().__init__(detail)
        self.line_number = line_number


class NumericalError(PipelineError):
    """A loss, gradient or parameter became non-finite."""

    exit_code = EXIT_NUMERICAL

    def __init__(self, detail: str, diagnostics: Optional[dict] = None, phase_log=None):
        super().__init__(detail)
        self.diagnostics = diagnostics or {}
        self.phase_log = phase_log


class TrainingError(NumericalError):
    """Training diverged."""
