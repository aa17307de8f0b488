"""Error vocabulary shared across the engine.

Class names double as the machine-parsable error names the CLI prints on
stderr, so renaming one is a breaking change for downstream scripts.
"""


class PanolocError(Exception):
    """Base class for every engine error."""


# ---- core types ----------------------------------------------------------

class DimensionMismatch(PanolocError):
    """Vectors of different dimensionality were combined."""


class NonFiniteValue(PanolocError):
    """A coordinate or vector entry is NaN or infinite."""


class ZeroVector(PanolocError):
    """A zero-norm vector reached an operation that requires direction."""


class DuplicateView(PanolocError):
    """A record's views do not map exactly the four cardinal directions."""


class EmptyInput(PanolocError):
    """An operation that needs at least one element received none."""


# ---- aggregation ---------------------------------------------------------

class TooManyMembers(PanolocError):
    """More members than dimensions; outside the supported pseudo-inverse regime."""


class MixedModes(PanolocError):
    """Memory vectors of different aggregation modes were combined."""


class WrongViewCount(PanolocError):
    """Panorama aggregation requires exactly four views."""


# ---- clustering ----------------------------------------------------------

class DuplicateId(PanolocError):
    """Two items share an identifier."""


# ---- index ---------------------------------------------------------------

class EmptyIndex(PanolocError):
    """The index contains no records."""


class InvalidConfig(PanolocError):
    """A configuration value is out of range or inconsistent."""


class IoFailure(PanolocError):
    """An underlying read or write failed."""


class FormatVersionMismatch(PanolocError):
    """Index container has an unknown magic or format version."""


class ChecksumMismatch(PanolocError):
    """Index container is truncated or corrupted."""


# ---- geoposition ---------------------------------------------------------

class TooFewCandidates(PanolocError):
    """Re-ranking needs at least two candidates."""


class NonPositiveMass(PanolocError):
    """Center of gravity requires strictly positive similarity masses."""


# ---- evaluation ----------------------------------------------------------

class LengthMismatch(PanolocError):
    """Parallel result/truth lists differ in length."""


# ---- feature files -------------------------------------------------------

class BadMagic(PanolocError):
    """Feature file does not start with the expected magic bytes."""


class VersionMismatch(PanolocError):
    """Feature file version or element type is unsupported."""


class CountMismatch(PanolocError):
    """Header count, payload size and metadata rows disagree."""


class MissingView(PanolocError):
    """A panorama lacks one of its four cardinal views."""


class DuplicateRow(PanolocError):
    """Metadata contains a repeated (id, view) pair or a conflicting PANO row."""


class InvalidRow(PanolocError):
    """A metadata row is malformed."""
