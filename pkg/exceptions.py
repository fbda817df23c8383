"""
Error Types - What Can Go Wrong
Every failure raised by the solver derives from AilfemError, so callers can catch one base.
"""


class AilfemError(Exception):
    """Base class for all solver errors"""


class UnknownNameError(AilfemError, ValueError):
    """Unknown domain, problem, nonlinearity or method name"""


class InvalidParameterError(AilfemError, ValueError):
    """A parameter or data invariant is violated"""


class NonFiniteError(AilfemError, ArithmeticError):
    """NaN or Inf appeared in a computed quantity"""


class EnergyIncreaseError(AilfemError):
    """An accepted linearization step increased the energy beyond round-off"""


class FactorizationError(AilfemError):
    """Sparse direct factorization failed (singular or non-finite system)"""


class MissingExactSolutionError(AilfemError):
    """Exact error requested for a problem without exact gradient"""


class DiagnosticModeError(AilfemError):
    """Diagnostic quantity requested from a run that did not retain iterates"""


class InsufficientDataError(AilfemError, ValueError):
    """Not enough recorded data for a fit or estimate"""


class ConfigError(AilfemError, ValueError):
    """Run configuration is malformed"""


class StepCapExceeded(AilfemError):
    """The safety cap on algebraic solver steps was reached"""

    def __init__(self, message: str, steps: int = 0):
        super().__init__(message)
        self.steps = steps
