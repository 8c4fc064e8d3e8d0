"""Exception hierarchy.

Errors split into four families that the CLI maps onto exit codes:
validation problems (bad input, exit 1), executor failures (backend
infrastructure, exit 2), all-candidates-crashed (exit 3), and storage
problems (exit 2).
"""

from __future__ import annotations


class TuneTreeError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(TuneTreeError):
    """A configuration, bundle, plan, or document failed validation."""


class UnknownParameterError(ValidationError):
    def __init__(self, name: str):
        super().__init__(f"unknown parameter: {name}")
        self.name = name


class IllegalValueError(ValidationError):
    def __init__(self, name: str, value: object, why: str):
        super().__init__(f"illegal value for {name}: {value!r} ({why})")
        self.name = name
        self.value = value


class ConstraintViolationError(ValidationError):
    """A cross-parameter constraint does not hold (names the rule)."""


class DocumentError(ValidationError):
    """A catalog, plan, model, table, or sweep-spec document is malformed."""


class TemplateError(ValidationError):
    """A command template is unusable for the chosen injection mode."""


class EmptyCandidatesError(ValidationError):
    """Numeric candidate selection collapsed every value onto the default."""


class PlanInvalidError(ValidationError):
    """A tuning plan violates its structural invariants."""


class SearchSpaceTooLargeError(TuneTreeError):
    """The plan's reachable configuration set exceeds the enumeration cap."""


class ExecutorFailureError(TuneTreeError):
    """Backend infrastructure error, distinct from an application crash."""


class SpawnFailureError(ExecutorFailureError):
    """The trial command could not be started at all."""


class MissingEntryError(ExecutorFailureError):
    """A replay table has no entry for the queried configuration."""


class NoValidValuesError(TuneTreeError):
    """Every candidate value of a swept parameter crashed."""

    def __init__(self, parameter: str):
        super().__init__(f"no valid values for parameter: {parameter}")
        self.parameter = parameter


class IoFailureError(TuneTreeError):
    """A session record could not be written or read."""


class SchemaVersionMismatchError(TuneTreeError):
    def __init__(self, found: object):
        super().__init__(f"unsupported record schema version: {found!r}")
        self.found = found
