"""Exception types shared across the package.

The CLI maps these onto stable exit codes (see ``molitho.cli``).
"""


class MolithoError(Exception):
    """Base class for all package errors."""


class DomainError(MolithoError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalError(MolithoError, RuntimeError):
    """A numerical procedure failed to converge or lost consistency.

    ``diagnostics`` carries whatever the failing routine knew at the time
    (iteration counts, error estimates, traces).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(MolithoError, ValueError):
    """Invalid experiment configuration (parse or invariant failure)."""


class AnalysisError(MolithoError, RuntimeError):
    """The image analysis pipeline could not produce a result."""
