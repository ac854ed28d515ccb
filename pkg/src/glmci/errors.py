"""Exception taxonomy shared across the package.

Every failure mode that callers are expected to handle gets its own class so
the CLI can map it to a stable exit code and a machine-readable record.
"""

from __future__ import annotations


class GlmciError(Exception):
    """Base class for all package errors."""


class InputValidationError(GlmciError):
    """Malformed shapes, domains or options detected before any fitting."""


class ConfigError(GlmciError):
    """Inconsistent configuration (bad level, too few replicates, ...)."""


class UnsupportedFamilyError(InputValidationError):
    """Family kind or link outside the supported set."""


class DataError(GlmciError):
    """Problems in tabular input: unparseable cells, empty columns, ..."""


class NumericOverflowError(GlmciError):
    """A loss or gradient evaluation produced a non-finite value.

    ``index`` is the first offending observation.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ConvergenceError(GlmciError):
    """Iteration budget exhausted without meeting the convergence criteria."""


class IrlsDivergenceError(ConvergenceError):
    """Penalized objective increased and step halving could not repair it."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateDataError(GlmciError):
    """Data degenerate for the requested operation (constant penalized
    column, all-zero count response, zero-variance response, ...)."""


class FoldDegeneracyError(DegenerateDataError):
    """A cross-validation training fold cannot support a fit."""

    def __init__(self, message: str, fold: int):
        super().__init__(message)
        self.fold = fold


class SingularityError(GlmciError):
    """Exactly collinear design where an inverse or OLS step is required."""


class ConditioningError(SingularityError):
    """Condition number beyond the allowed threshold for direct inversion."""

    def __init__(self, message: str, cond: float):
        super().__init__(message)
        self.cond = cond


class InfeasibleConstraintError(GlmciError):
    """Relaxation parameter too small for the precision-column program."""


class ReplicateFailureError(GlmciError):
    """A bootstrap replicate stayed degenerate after the retry budget."""

    def __init__(self, message: str, replicate: int, retries: int):
        super().__init__(message)
        self.replicate = replicate
        self.retries = retries


# Exit codes used by the command line interface. 1 is left to unexpected
# crashes so scripted callers can tell "known failure" from "bug".
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4
EXIT_NUMERIC = 5


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, InputValidationError)):
        return EXIT_USAGE
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, GlmciError):
        return EXIT_NUMERIC
    return 1
