"""Exception types raised across the package."""


class SubmetryLabError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SubmetryLabError, ValueError):
    """An input lies off the space or violates a geometric precondition."""


class ConfigurationError(SubmetryLabError, ValueError):
    """A requested bound or setting exceeds what is configured."""


class CutoffExceeded(SubmetryLabError, ValueError):
    """A function has an eigencomponent above the requested cutoff."""


class NotBasicError(SubmetryLabError, ValueError):
    """A supposedly basic function varies along a fiber."""


class UnsupportedError(SubmetryLabError, NotImplementedError):
    """The requested backend does not support this case."""


class PreconditionError(SubmetryLabError, ValueError):
    """A declared precondition of an operation does not hold."""


class InconclusiveError(SubmetryLabError, RuntimeError):
    """A numerical rank decision is too close to its threshold."""


class TailModelError(SubmetryLabError, RuntimeError):
    """The affine tail model does not fit the focal spectrum."""


class MultiplicityAmbiguityError(SubmetryLabError, RuntimeError):
    """A focal multiplicity could not be resolved."""


class IntegratorError(SubmetryLabError, RuntimeError):
    """An ODE integration did not reach the requested accuracy."""


class PoleError(SubmetryLabError, ValueError):
    """Evaluation at a pole of cot."""


class QuadratureError(SubmetryLabError, ValueError):
    """Quadrature order too low for an exact result."""


class FocalWindowWarning(UserWarning):
    """A focal root lies at the edge of the scan window."""
