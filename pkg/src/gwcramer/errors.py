"""Exception types shared across the package."""


class GWError(Exception):
    """Base class for all package errors."""


class InvalidLaw(GWError, ValueError):
    """Offspring law violates p0 = 0, normalization, or positive variance."""


class DomainError(GWError, ValueError):
    """An argument lies outside the domain of the requested function."""


class NonConvergent(GWError, ArithmeticError):
    """A truncated series hit its term cap before the tail criterion."""


class UnboundedSupport(GWError, ValueError):
    """Operation needs a law with bounded support."""


class RequiresP1Positive(GWError, ValueError):
    """Operation needs p1 > 0."""


class ZeroPopulation(GWError, ValueError):
    """A generation size of zero was passed where Z_n >= 1 is required."""


class PopulationOverflow(GWError, OverflowError):
    """A generation size left the supported integer range."""
