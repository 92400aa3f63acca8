"""Exception hierarchy.

Every error raised on bad data derives from :class:`BinPoseError`, so callers
(the CLI in particular) can report the class name as a stable error code.
"""


class BinPoseError(Exception):
    """Base class for all data-level errors raised by the package."""

    @property
    def code(self) -> str:
        return type(self).__name__


# geometry
class WrongSegmentCount(BinPoseError):
    pass


class DegenerateGeometry(BinPoseError):
    pass


class AmbiguousOrientation(BinPoseError):
    pass


class ZeroDirection(BinPoseError):
    pass


class ParallelVectors(BinPoseError):
    pass


class TooFewPoints(BinPoseError):
    pass


class InvalidRotation(BinPoseError):
    pass


# metrics
class LengthMismatch(BinPoseError):
    pass


class EmptySet(BinPoseError):
    pass


# assignment
class InvalidCost(BinPoseError):
    pass


class InvalidParams(BinPoseError):
    pass


# scan / synthgen
class NoValidPixels(BinPoseError):
    pass


class ConfigInvalid(BinPoseError):
    pass


# detect
class NoPlaneFound(BinPoseError):
    pass


class DegenerateRim(BinPoseError):
    pass


# dataset io
class CorruptFile(BinPoseError):
    pass


class SchemaMismatch(BinPoseError):
    pass


class SplitLeakage(BinPoseError):
    pass


class DuplicateSample(BinPoseError):
    pass
