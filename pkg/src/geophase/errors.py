"""Exception hierarchy shared by all modules."""


class GeophaseError(Exception):
    """Base class for library errors."""


class DomainError(GeophaseError, ValueError):
    """A parameter point or argument lies outside the admissible domain."""


class NumericalError(GeophaseError, RuntimeError):
    """A numerical procedure failed or its self-check tolerance was exceeded."""


class GridTooNarrowError(NumericalError):
    """A state does not decay to the edge threshold inside the spatial grid."""


class AliasingError(NumericalError):
    """A state's momentum content exceeds the representable range."""


class GapError(NumericalError):
    """The level of interest is (nearly) degenerate with a neighbour."""


class OverlapError(NumericalError):
    """Overlaps between neighbouring states are too small to link them."""


class AdiabaticityError(NumericalError):
    """A time evolution left the adiabatic regime (leakage or action drift)."""
