"""Shared data vocabulary: coordinates, vectors, records and candidate sets.

Every type here is immutable after construction (numpy payloads are marked
read-only), so instances are safe to share across threads. Invariants are
checked by :func:`validate_record` and :func:`validate_candidate_set`
rather than in constructors, which keeps malformed inputs representable
for ingestion-time rejection.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Mapping

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    DuplicateView,
    EmptyInput,
    NonFiniteValue,
    ZeroVector,
)

VIEW_KEYS = ("N", "E", "S", "W")


class VectorMode(Enum):
    """How a memory vector was aggregated from its members."""

    SUM = "sum"
    PINV = "pinv"


def _freeze(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GeoPoint:
    """Planar position in meters (east, north); no geodetic math anywhere."""

    x: float
    y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)

    def distance_to(self, other: "GeoPoint") -> float:
        return float(np.hypot(self.x - other.x, self.y - other.y))


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Descriptor of a single planar view."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureVector) and np.array_equal(
            self.values, other.values
        )


@dataclass(frozen=True, eq=False)
class MemoryVector:
    """Aggregate of one or more feature or memory vectors, the unit of search.

    ``regularized`` marks aggregates whose pseudo-inverse solve needed the
    ridge fallback (rank-deficient member sets, e.g. duplicate views).
    """

    values: np.ndarray
    mode: VectorMode
    member_count: int
    regularized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MemoryVector)
            and self.mode == other.mode
            and self.member_count == other.member_count
            and self.regularized == other.regularized
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class PanoRecord:
    """One georeferenced panorama: id, planar location, memory vector and
    optionally the four cardinal view descriptors it was aggregated from."""

    pano_id: str
    location: GeoPoint
    memory: MemoryVector
    views: Mapping[str, FeatureVector] | None = None

    def __post_init__(self):
        if self.views is not None:
            object.__setattr__(self, "views", dict(self.views))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PanoRecord):
            return False
        return (
            self.pano_id == other.pano_id
            and self.location == other.location
            and self.memory == other.memory
            and self.views == other.views
        )


@dataclass(frozen=True, eq=False)
class Candidate:
    """One ranked match: panorama id, its location, the similarity it scored
    against the query, and its stored memory vector."""

    pano_id: str
    location: GeoPoint
    query_similarity: float
    memory: MemoryVector

    def __eq__(self, other) -> bool:
        if not isinstance(other, Candidate):
            return False
        return (
            self.pano_id == other.pano_id
            and self.location == other.location
            and self.query_similarity == other.query_similarity
            and self.memory == other.memory
        )


@dataclass(frozen=True)
class CandidateSet:
    """Matches ordered by non-increasing similarity, ties by ascending id."""

    entries: tuple[Candidate, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Candidate]:
        return iter(self.entries)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return CandidateSet(self.entries[item])
        return self.entries[item]

    def top(self, n: int) -> "CandidateSet":
        return CandidateSet(self.entries[:n])


def _check_finite_array(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue(f"{what} contains NaN or infinite entries")


def _check_direction(values: np.ndarray, what: str) -> None:
    if values.shape[0] < 1:
        raise EmptyInput(f"{what} has no entries")
    _check_finite_array(values, what)
    if float(np.linalg.norm(values)) == 0.0:
        raise ZeroVector(f"{what} has zero norm")


def validate_record(record: PanoRecord) -> None:
    """Check every invariant of a record; raise the named violation.

    Raises DimensionMismatch, NonFiniteValue, ZeroVector, DuplicateView or
    EmptyInput. A record that passes is identical after a serialization
    round trip.
    """
    loc = record.location
    if not (np.isfinite(loc.x) and np.isfinite(loc.y)):
        raise NonFiniteValue(f"record {record.pano_id!r}: non-finite coordinate")
    if record.memory.member_count < 1:
        raise EmptyInput(f"record {record.pano_id!r}: member_count < 1")
    _check_direction(record.memory.values, f"record {record.pano_id!r} memory")
    if record.views is not None:
        if set(record.views) != set(VIEW_KEYS) or len(record.views) != 4:
            raise DuplicateView(
                f"record {record.pano_id!r}: views must map exactly N, E, S, W"
            )
        for key in VIEW_KEYS:
            view = record.views[key]
            _check_direction(view.values, f"record {record.pano_id!r} view {key}")
            if view.dim != record.memory.dim:
                raise DimensionMismatch(
                    f"record {record.pano_id!r}: view {key} has dim {view.dim}, "
                    f"memory has dim {record.memory.dim}"
                )


def validate_candidate_set(candidates: CandidateSet) -> None:
    """Check ordering and uniqueness; raise DuplicateId or ValueError."""
    seen = set()
    prev: Candidate | None = None
    for cand in candidates:
        if cand.pano_id in seen:
            raise DuplicateId(f"candidate {cand.pano_id!r} appears twice")
        seen.add(cand.pano_id)
        if not -1.0 <= cand.query_similarity <= 1.0:
            raise ValueError(
                f"candidate {cand.pano_id!r}: similarity outside [-1, 1]"
            )
        if prev is not None:
            if cand.query_similarity > prev.query_similarity:
                raise ValueError("candidates not ordered by similarity")
            if (
                cand.query_similarity == prev.query_similarity
                and cand.pano_id < prev.pano_id
            ):
                raise ValueError("similarity tie not broken by ascending id")
        prev = cand
