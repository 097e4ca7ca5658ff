"""Exception types raised across the levy_ou package.

All of them subclass ValueError so callers that only care about "bad input"
can keep catching ValueError, while the harness can map each kind to a
specific diagnostic.
"""


class PathDomainError(ValueError):
    """A path was queried at a time outside [0, T]."""


class PathFormatError(ValueError):
    """A serialized path file could not be parsed.

    Attributes:
        line: 1-based line number where parsing failed (None if the failure
            is not tied to a single line, e.g. a cross-record invariant)
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SetContractError(ValueError):
    """A jump functional was asked for a set it is not defined on."""


class InfiniteActivityError(ValueError):
    """A simulator was handed a jump measure with infinitely many jumps."""


class SingularGramError(ValueError):
    """Drift recovery refused: the Gram matrix of running integrals is singular."""

    def __init__(self, message, sigma_min=None, sigma_tol=None):
        self.sigma_min = sigma_min
        self.sigma_tol = sigma_tol
        super().__init__(message)


class HypothesisViolation(ValueError):
    """An operation was called outside the hypotheses it is valid under."""


class ConfigError(ValueError):
    """Experiment configuration failed validation.

    Attributes:
        field: Name of the offending config key (None for file-level errors)
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
