"""Exception hierarchy shared by the library and the command line front end."""


class DemonSimError(Exception):
    """Base class for every error raised by demon_sim."""


class ConfigError(DemonSimError, ValueError):
    """Invalid or incomplete physical/run configuration."""


class InvariantViolation(DemonSimError):
    """A physical invariant (trace, positivity, hermiticity, ...) failed beyond tolerance."""


class ConvergenceError(DemonSimError):
    """An iterative routine exhausted its iteration budget."""


class NonUniqueSteadyState(DemonSimError):
    """The block map has more than one fixed point."""


class BudgetExceeded(DemonSimError):
    """Trajectory enumeration would exceed the configured depth cap."""
