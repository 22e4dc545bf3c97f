"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the state space or parameter range."""


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of budget before meeting its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class AdmissibilityError(ValueError):
    """A parameter sequence leaves the admissible range [0, beta_star]."""


class DimensionError(ValueError):
    """Grid objects of incompatible shape were combined."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""
