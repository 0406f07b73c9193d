"""Exception hierarchy shared by all heatreach modules."""


class HeatreachError(Exception):
    """Base class for every error raised by the package."""


class JetShapeError(HeatreachError, ValueError):
    """Jet dimensions are incompatible with the requested operation."""


class DomainError(HeatreachError):
    """State outside nonlinearity domain."""


class NonconvergentComposition(HeatreachError):
    """The (p, q) expansion of f did not reach its tail tolerance."""


class SeriesRadiusError(HeatreachError, ValueError):
    """Series radius exceeded."""


class DepthExhausted(HeatreachError):
    """Jet depth exhausted: not enough orders to fill the requested triangle."""


class DivergentConstant(HeatreachError, ValueError):
    """A summation constant was requested outside its range of convergence."""


class NoContractionIndex(HeatreachError):
    """No contraction index found in a lambda schedule."""


class GapConditionError(HeatreachError, ValueError):
    """Gap condition violated between the input and output Gevrey radii."""


class CertificateError(HeatreachError):
    """A constructed trace failed its own growth certificate on the grid."""


class ParityError(HeatreachError):
    """Parity requirements of the single-control mode are not met."""


class SynthesisError(HeatreachError):
    """The sideways series could not be evaluated at |x| = 1."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class SimulationError(HeatreachError):
    """Forward simulation failed (blow-up/domain exit or solver trouble)."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ConfigError(HeatreachError, ValueError):
    """Problem configuration failed validation."""

    def __init__(self, message, errors=()):
        super().__init__(message)
        self.errors = list(errors)
