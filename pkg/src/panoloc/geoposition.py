"""Coordinate estimation from a candidate set.

Candidates are re-ranked by how well they agree with each other: each one
accumulates its cosine similarity to every other candidate divided by
their geographic distance, so isolated or dissimilar matches score low.
Candidates below the mean rank are rejected and the position estimate is
the similarity-weighted center of gravity of the survivors.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import Candidate, CandidateSet, GeoPoint
from .errors import (
    DimensionMismatch,
    EmptyInput,
    NonPositiveMass,
    TooFewCandidates,
)

# Floor on pairwise distances; below the 5 m acquisition spacing, so it only
# engages for (near-)coincident candidates where the raw formula blows up.
DISTANCE_FLOOR_M = 1.0


@dataclass(frozen=True)
class RankedCandidate:
    """Candidate plus its agreement score (similarity per meter) and the
    keep/reject flag set by the mean-threshold filter."""

    pano_id: str
    location: GeoPoint
    query_similarity: float
    rank_score: float
    kept: bool = True


@dataclass(frozen=True)
class GeoEstimate:
    """Estimated position; always inside the convex hull of contributors."""

    position: GeoPoint
    contributors: tuple[str, ...]
    total_mass: float


def rerank(candidates: CandidateSet) -> list[RankedCandidate]:
    """Score each candidate against all others; input order is preserved.

    rank = sum over the other candidates of max(cos, 0) divided by their
    geographic distance floored at DISTANCE_FLOOR_M. Pairs are accumulated
    in id order so the float result is deterministic.
    """
    entries = list(candidates)
    if len(entries) < 2:
        raise TooFewCandidates(f"re-ranking needs >= 2 candidates, got {len(entries)}")
    dims = {c.memory.dim for c in entries}
    if len(dims) != 1:
        raise DimensionMismatch(f"candidate memory dims differ: {sorted(dims)}")

    order = sorted(range(len(entries)), key=lambda i: entries[i].pano_id)
    vectors = np.array([entries[i].memory.values for i in order])
    vectors = vectors / np.linalg.norm(vectors, axis=1)[:, None]
    xy = np.array([[entries[i].location.x, entries[i].location.y] for i in order])

    sims = np.clip(vectors @ vectors.T, -1.0, 1.0)
    np.maximum(sims, 0.0, out=sims)
    deltas = xy[:, None, :] - xy[None, :, :]
    dists = np.maximum(np.hypot(deltas[..., 0], deltas[..., 1]), DISTANCE_FLOOR_M)
    terms = sims / dists
    np.fill_diagonal(terms, 0.0)
    scores_sorted = terms.sum(axis=1)

    scores = np.empty(len(entries))
    scores[order] = scores_sorted
    return [
        RankedCandidate(
            pano_id=c.pano_id,
            location=c.location,
            query_similarity=c.query_similarity,
            rank_score=float(scores[i]),
        )
        for i, c in enumerate(entries)
    ]


def filter_by_mean(ranked: Sequence[RankedCandidate]) -> list[RankedCandidate]:
    """Keep candidates whose rank is at or above the mean of all ranks.

    The maximum is never below the mean, so at least one always survives.
    """
    if len(ranked) == 0:
        raise EmptyInput("no candidates to filter")
    mean = float(np.mean([c.rank_score for c in ranked]))
    return [replace(c, kept=c.rank_score >= mean) for c in ranked]


def center_of_gravity(kept: Sequence) -> GeoEstimate:
    """Similarity-weighted mean of the candidate locations.

    Accepts anything with ``pano_id``, ``location`` and
    ``query_similarity`` attributes. The original query similarities are
    the masses and must be strictly positive; non-positive masses signal
    an upstream matching failure and are rejected.
    """
    if len(kept) == 0:
        raise EmptyInput("no candidates for center of gravity")
    masses = np.array([c.query_similarity for c in kept], dtype=np.float64)
    if np.any(masses <= 0.0):
        raise NonPositiveMass("candidate with non-positive query similarity")
    xy = np.array([[c.location.x, c.location.y] for c in kept], dtype=np.float64)
    total = float(masses.sum())
    position = (masses[:, None] * xy).sum(axis=0) / total
    return GeoEstimate(
        position=GeoPoint(float(position[0]), float(position[1])),
        contributors=tuple(c.pano_id for c in kept),
        total_mass=total,
    )


def estimate_position(candidates: CandidateSet, use_rerank: bool) -> GeoEstimate:
    """Full estimation path over a candidate set.

    Without re-ranking this is the plain weighted center of gravity over
    all candidates; with it, one rerank/filter pass runs first and only
    the survivors contribute. A single candidate trivially survives.
    """
    entries: Sequence[Candidate | RankedCandidate] = list(candidates)
    if len(entries) == 0:
        raise EmptyInput("empty candidate set")
    if use_rerank and len(entries) >= 2:
        flagged = filter_by_mean(rerank(candidates))
        entries = [c for c in flagged if c.kept]
    return center_of_gravity(entries)
