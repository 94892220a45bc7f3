"""Exception types raised across the package."""


class SpherePrivError(ValueError):
    """Base class for all library errors."""


class ZeroVector(SpherePrivError):
    pass


class DimMismatch(SpherePrivError):
    pass


class DegeneratePlane(SpherePrivError):
    pass


class SamplerStalled(SpherePrivError, RuntimeError):
    """The VMF rejection loop exceeded its iteration cap."""


class InvalidSpec(SpherePrivError):
    pass


class InsufficientReferences(SpherePrivError):
    pass


class DegenerateCovariance(SpherePrivError):
    pass


class InsufficientSamples(SpherePrivError):
    pass


class EmptyGallery(SpherePrivError):
    pass


class EmptyInput(SpherePrivError):
    pass


class NoAttributes(SpherePrivError):
    pass


class FormatError(SpherePrivError):
    """Malformed embedding file or report document."""
