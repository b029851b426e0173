"""Exception hierarchy shared across the package.

Every error raised on a declared contract boundary derives from LinkUtilError
so the CLI can map categories to exit codes.
"""


class LinkUtilError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InvalidArgumentError(LinkUtilError):
    """A precondition on an argument was violated."""

    exit_code = 3


class NotFoundError(LinkUtilError):
    """A referenced user does not exist in the given view."""

    exit_code = 3


class ParseError(LinkUtilError):
    """A file could not be parsed; carries the offending line number."""

    exit_code = 4

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(prefix + message)


class IntegrityError(LinkUtilError):
    """Referential integrity between files is broken (e.g. dangling user id)."""

    exit_code = 4


class EmptySetError(LinkUtilError):
    """An operation that needs a non-empty candidate set got none."""

    exit_code = 3


class ConfigurationError(LinkUtilError):
    """Inputs leave a required estimator undefined (e.g. cost fallback)."""

    exit_code = 3


class NumericError(LinkUtilError):
    """A numeric quantity became non-finite; names the offending record."""

    exit_code = 5


class DegenerateClassError(LinkUtilError):
    """A class is absent or a closed-form denominator collapsed."""

    exit_code = 6


class InitializationError(LinkUtilError):
    """Repeated initialization sampling failed to produce both classes."""

    exit_code = 6


class LearningError(LinkUtilError):
    """Every restart of the learning procedure failed."""

    exit_code = 6


class SamplerError(LinkUtilError):
    """Rejection sampling acceptance collapsed; widen the envelope."""

    exit_code = 6
