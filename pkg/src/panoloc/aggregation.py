"""Memory-vector construction and cosine matching.

Two constructions are supported: plain summation of the members, and
least-squares weights obtained from the Moore-Penrose pseudo-inverse of
the member matrix, solved through the small n-by-n Gram system. Members
are always L2-normalized on entry; aggregates are stored un-normalized
and normalization is folded into the cosine similarity, which makes every
downstream ranking invariant to positive rescaling of the inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import VIEW_KEYS, FeatureVector, MemoryVector, VectorMode
from .errors import (
    DimensionMismatch,
    EmptyInput,
    MixedModes,
    TooManyMembers,
    WrongViewCount,
    ZeroVector,
)


@dataclass(frozen=True)
class AggregationMode:
    """Aggregation recipe: which construction to use plus the ridge guard.

    ``ridge_epsilon`` is relative to trace(G)/n. It both detects a
    numerically singular Gram matrix and sizes the fallback ridge term.
    """

    kind: VectorMode = VectorMode.PINV
    ridge_epsilon: float = 1e-9

    def __post_init__(self):
        if self.ridge_epsilon <= 0:
            raise ValueError("ridge_epsilon must be positive")


SUM = AggregationMode(VectorMode.SUM)
PINV = AggregationMode(VectorMode.PINV)


def parse_mode(name: str, ridge_epsilon: float = 1e-9) -> AggregationMode:
    """Build an AggregationMode from its CLI spelling ('sum' or 'pinv')."""
    return AggregationMode(VectorMode(name.lower()), ridge_epsilon)


def _normalized_matrix(rows: Sequence[np.ndarray], what: str) -> np.ndarray:
    """Stack rows into an (n, d) matrix of unit-norm float64 vectors."""
    if len(rows) == 0:
        raise EmptyInput(f"{what}: no members")
    dim = rows[0].shape[0]
    for i, row in enumerate(rows):
        if row.shape[0] != dim:
            raise DimensionMismatch(
                f"{what}: member {i} has dim {row.shape[0]}, expected {dim}"
            )
    matrix = np.array(rows, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVector(f"{what}: member {int(np.argmin(norms))} has zero norm")
    return matrix / norms[:, None]


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    av = np.asarray(a, dtype=np.float64).reshape(-1)
    bv = np.asarray(b, dtype=np.float64).reshape(-1)
    if av.shape != bv.shape:
        raise DimensionMismatch(f"dims {av.shape[0]} vs {bv.shape[0]}")
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return float(min(1.0, max(-1.0, float(av @ bv) / (na * nb))))


def sum_vector(members: Sequence[FeatureVector]) -> MemoryVector:
    """Sum the unit-normalized members; the result stays un-normalized."""
    matrix = _normalized_matrix([m.values for m in members], "sum_vector")
    return MemoryVector(
        values=matrix.sum(axis=0),
        mode=VectorMode.SUM,
        member_count=len(members),
    )


def _pinv_solve(matrix: np.ndarray, ridge_epsilon: float) -> tuple[np.ndarray, bool]:
    """Solve X m = 1 through the Gram system; returns (m, regularized).

    The Gram matrix G = X X^T is n-by-n with n <= d, so the solve is exact
    and cheap. If any eigenvalue falls below ridge_epsilon * trace(G) / n
    the system is treated as singular and re-solved with that value added
    to the diagonal.
    """
    n = matrix.shape[0]
    gram = matrix @ matrix.T
    ridge = ridge_epsilon * float(np.trace(gram)) / n
    regularized = bool(np.linalg.eigvalsh(gram).min() < ridge)
    if regularized:
        gram = gram + ridge * np.eye(n)
    coeffs = np.linalg.solve(gram, np.ones(n))
    return matrix.T @ coeffs, regularized


def pinv_vector(
    members: Sequence[FeatureVector], mode: AggregationMode = PINV
) -> MemoryVector:
    """Aggregate members into the least-squares ("p-inv") memory vector.

    The result m satisfies x_i . m = 1 for every unit-normalized member
    x_i whenever the members are linearly independent; rank-deficient sets
    fall back to a ridge solve and are flagged as regularized. Member
    counts above the dimensionality are outside the supported regime and
    rejected.
    """
    matrix = _normalized_matrix([m.values for m in members], "pinv_vector")
    n, d = matrix.shape
    if n > d:
        raise TooManyMembers(f"{n} members exceed dimension {d}")
    values, regularized = _pinv_solve(matrix, mode.ridge_epsilon)
    return MemoryVector(
        values=values,
        mode=VectorMode.PINV,
        member_count=n,
        regularized=regularized,
    )


def aggregate_panorama(
    views: Mapping[str, FeatureVector] | Sequence[FeatureVector],
    mode: AggregationMode,
) -> MemoryVector:
    """Aggregate the four cardinal views of one panorama.

    Mappings are read in fixed N, E, S, W order so the float result is
    reproducible regardless of insertion order.
    """
    if isinstance(views, Mapping):
        if set(views) != set(VIEW_KEYS):
            raise WrongViewCount("views must map exactly N, E, S, W")
        ordered = [views[k] for k in VIEW_KEYS]
    else:
        ordered = list(views)
    if len(ordered) != 4:
        raise WrongViewCount(f"expected 4 views, got {len(ordered)}")
    if mode.kind is VectorMode.SUM:
        return sum_vector(ordered)
    return pinv_vector(ordered, mode)


def aggregate_memories(
    members: Sequence[MemoryVector], mode: AggregationMode
) -> MemoryVector:
    """Summarize several memory vectors into a single cluster-level one.

    Members are unit-normalized and then aggregated exactly like feature
    vectors; the member count of the result is the total count across
    members, i.e. the number of leaf views it stands for.
    """
    if len(members) == 0:
        raise EmptyInput("aggregate_memories: no members")
    kinds = {m.mode for m in members} | {mode.kind}
    if len(kinds) != 1:
        raise MixedModes(f"mixed aggregation modes: {sorted(k.value for k in kinds)}")
    matrix = _normalized_matrix([m.values for m in members], "aggregate_memories")
    total = sum(m.member_count for m in members)
    if mode.kind is VectorMode.SUM:
        return MemoryVector(
            values=matrix.sum(axis=0), mode=VectorMode.SUM, member_count=total
        )
    n, d = matrix.shape
    if n > d:
        raise TooManyMembers(f"{n} members exceed dimension {d}")
    values, regularized = _pinv_solve(matrix, mode.ridge_epsilon)
    return MemoryVector(
        values=values,
        mode=VectorMode.PINV,
        member_count=total,
        regularized=regularized,
    )
