"""Exception types raised across polarforge."""


class PolarForgeError(ValueError):
    """Base class for all polarforge errors."""


class DegenerateInput(PolarForgeError):
    pass


class OutOfBounds(PolarForgeError):
    pass


class OutOfDomain(PolarForgeError):
    pass


class BackFacing(PolarForgeError):
    pass


class ShapeMismatch(PolarForgeError):
    pass


class EmptyMask(PolarForgeError):
    pass


class BothEmpty(PolarForgeError):
    """Both masks are empty; the discrepancy is taken to be 1."""

    delta = 1.0


class EmptySet(PolarForgeError):
    pass


class EmptyInput(PolarForgeError):
    pass


class NoOverlap(PolarForgeError):
    pass


class CorruptArchive(PolarForgeError):
    pass


class InvalidInput(PolarForgeError):
    pass
