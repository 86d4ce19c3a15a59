"""Exception types shared across the toolkit."""


class BurstlabError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(BurstlabError, ValueError):
    """Array arguments have incompatible or invalid shapes."""


class ParameterError(BurstlabError, ValueError):
    """A scalar or structural argument is outside its admissible range."""


class ConvergenceError(BurstlabError, RuntimeError):
    """An iterative solver exhausted its iteration budget.

    Carries a ``diagnostics`` dict with the last iterate state so failures
    can be reported with context.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class RangeError(BurstlabError, OverflowError):
    """A computation left the representable floating-point range."""


class StiffnessError(BurstlabError, RuntimeError):
    """Adaptive step size underflowed; the problem is too stiff for the solver."""

    def __init__(self, message, t=None, state_norm=None, susceptibility=None):
        super().__init__(message)
        self.t = t
        self.state_norm = state_norm
        self.susceptibility = susceptibility


class DivergenceError(BurstlabError, RuntimeError):
    """The integrated state became non-finite."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ConfigError(BurstlabError, ValueError):
    """A run configuration failed schema validation.

    ``anchor`` is a human-readable location ("file:line: key path") when the
    source position is known.
    """

    def __init__(self, message, anchor=None):
        super().__init__(f"{anchor}: {message}" if anchor else message)
        self.anchor = anchor


class GrowthChannelInactive(BurstlabError, ValueError):
    """Raised when a tail index is requested for a non-positive growth rate."""


class TruncationUnavailable(BurstlabError, ValueError):
    """Raised when the mitigation contraction factor does not satisfy rho < 1."""


class AuditFailure(BurstlabError, RuntimeError):
    """A runtime audit (energy inequality, pathwise bound, controller hygiene) failed."""
