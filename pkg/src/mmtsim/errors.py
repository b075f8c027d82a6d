"""Exception hierarchy shared by all toolkit modules."""


class MMTError(Exception):
    """Base class for toolkit errors."""


class InputError(MMTError, ValueError):
    """Invalid argument or configuration value."""


class SingularityError(MMTError, ValueError):
    """Field or force evaluated at a singular (zero) distance."""


class GeometryError(MMTError, ValueError):
    """Overlapping magnets or receiver placed inside the source volume."""


class DomainError(InputError):
    """Argument outside the mathematical domain of an operation."""


class ConfigurationError(InputError):
    """Mutually incompatible settings, e.g. a carrier too slow for the bitrate."""


class FitError(MMTError, ArithmeticError):
    """Least-squares problem is rank deficient."""


class CouplingError(DomainError):
    """Electro-mechanical coupling is zero where a transfer function needs it."""


class IntegrationDivergedError(MMTError, ArithmeticError):
    """Time integration produced a non-finite state."""

    def __init__(self, step, time):
        super().__init__(f"integration diverged at step {step} (t={time:.6g} s)")
        self.step = step
        self.time = time


class InsufficientDataError(MMTError, ValueError):
    """Time series too short for the requested analysis."""


class SamplingError(MMTError, ValueError):
    """Time series sampled too coarsely for the requested analysis."""


class DecodeAmbiguousError(MMTError, ValueError):
    """Envelope has no usable contrast between on and off levels."""


NUMERICAL_ERRORS = (FitError, IntegrationDivergedError)
