"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class InvalidStateError(ValueError):
    """A matrix is not a physical qubit density matrix."""


class InvalidOperatorError(ValueError):
    """A 2x2 operator is non-finite or not Hermitian where required."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance.

    The best available estimate and its error bound are kept on the
    exception so callers can decide whether to use them anyway.
    """

    def __init__(self, message, estimate=float("nan"), error=float("nan")):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class AmbiguousMeasureError(ValueError):
    """The bounded backflow measure needs a single recoherence window."""


class NotBracketedError(ValueError):
    """A crossover scan found no sign change of the measure on its grid."""

    def __init__(self, message, low=None, high=None):
        super().__init__(message)
        self.low = low
        self.high = high


class StepSizeError(RuntimeError):
    """Time step too large for the integrator or jump unraveling."""


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad value, missing key)."""


class ReservoirValidationError(DomainError):
    """Reservoir parameters violate a diluteness or weak-interaction bound."""
