"""Exception types shared across the package."""


class MosaicError(Exception):
    """Base class for all package-specific errors."""


# geometry

class EmptyInput(MosaicError):
    pass


class DuplicateSeeds(MosaicError):
    pass


class SeedOutOfBounds(MosaicError):
    pass


class IndexOutOfRange(MosaicError, IndexError):
    pass


class DegeneratePolygon(MosaicError):
    pass


class DegenerateCell(MosaicError):
    """Cell lacks the feature an operation needs (e.g. no interior ridge)."""


# maskops

class NonBinaryInput(MosaicError):
    pass


class OutOfBoundsCenter(MosaicError):
    pass


class DimensionMismatch(MosaicError):
    pass


class UnsupportedFormat(MosaicError):
    pass


class LabelOverflow(MosaicError):
    pass


class ParseError(MosaicError):
    """Malformed text input; carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# metrics

class InvalidThreshold(MosaicError):
    pass


class LengthMismatch(MosaicError):
    pass


class ConstantSeries(MosaicError):
    pass


# density

class NonPositiveDimension(MosaicError):
    pass


class OutOfRange(MosaicError):
    pass


# fit

class InvalidOffset(MosaicError):
    pass


class NonPositiveDensity(MosaicError):
    pass


class Underdetermined(MosaicError):
    pass


class Diverged(MosaicError):
    pass


class UnknownParticipant(MosaicError):
    pass


# synth

class UnresolvableDensity(MosaicError):
    pass


# cli

class ManifestError(MosaicError):
    pass
