"""Searchable structure over a cluster hierarchy.

Queries are answered either by a full scan over all panoramas or by beam
descent: score the nodes of the configured granularity level, keep the
best ``beam_width`` (pooled across parents), re-score their children, and
at level zero rank all surviving panoramas. Every cosine evaluation is
counted, which is the primary, hardware-independent cost metric.

All vector and coordinate values are rounded to float32-representable
numbers when the index is built, so the float32 on-disk container
("PLIX") round-trips with observationally identical behavior.
"""
from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aggregation import AggregationMode
from .core import (
    Candidate,
    CandidateSet,
    GeoPoint,
    MemoryVector,
    PanoRecord,
    VectorMode,
    validate_record,
)
from .errors import (
    ChecksumMismatch,
    DimensionMismatch,
    EmptyIndex,
    FormatVersionMismatch,
    InvalidConfig,
    IoFailure,
)
from .geocluster import Cluster, Hierarchy, build_hierarchy

INDEX_MAGIC = b"PLIX"
INDEX_VERSION = 1
_CHECKSUM_BYTES = 8


@dataclass(frozen=True)
class SearchConfig:
    """Query-time knobs: result count, clusters expanded per level, and the
    granularity level the descent starts from (0 = full scan)."""

    top_k: int
    beam_width: int = 5
    granularity: int = 0

    def __post_init__(self):
        if self.top_k < 1:
            raise InvalidConfig("top_k must be >= 1")
        if self.beam_width < 1:
            raise InvalidConfig("beam_width must be >= 1")
        if self.granularity < 0:
            raise InvalidConfig("granularity must be >= 0")


@dataclass(frozen=True)
class SearchStats:
    similarity_evaluations: int
    nodes_visited: int
    wall_time: float  # seconds


def _f32(values: np.ndarray) -> np.ndarray:
    """Round to the nearest float32-representable float64 values."""
    return np.asarray(np.asarray(values, dtype=np.float32), dtype=np.float64)


def _quantize_memory(memory: MemoryVector) -> MemoryVector:
    return MemoryVector(
        values=_f32(memory.values),
        mode=memory.mode,
        member_count=memory.member_count,
        regularized=memory.regularized,
    )


def _quantize_point(point: GeoPoint) -> GeoPoint:
    return GeoPoint(float(np.float32(point.x)), float(np.float32(point.y)))


@dataclass
class _Level:
    ids: tuple[str, ...]  # ascending
    vectors: np.ndarray  # (k, dim)
    norms: np.ndarray  # (k,)
    children: tuple[np.ndarray, ...] | None  # indices into the level below


class SearchIndex:
    """Immutable search structure; safe for concurrent read-only queries."""

    def __init__(self, hierarchy: Hierarchy, mode: AggregationMode):
        self._hierarchy = hierarchy
        self._mode = mode
        self.records: tuple[PanoRecord, ...] = hierarchy.levels[0]
        self._levels: list[_Level] = []

        vectors = np.array([r.memory.values for r in self.records])
        self._levels.append(
            _Level(
                ids=tuple(r.pano_id for r in self.records),
                vectors=vectors,
                norms=np.linalg.norm(vectors, axis=1),
                children=None,
            )
        )
        for depth in range(1, hierarchy.granularity + 1):
            clusters: Sequence[Cluster] = hierarchy.levels[depth]
            below = {cid: idx for idx, cid in enumerate(self._levels[depth - 1].ids)}
            vectors = np.array([c.memory.values for c in clusters])
            self._levels.append(
                _Level(
                    ids=tuple(c.cluster_id for c in clusters),
                    vectors=vectors,
                    norms=np.linalg.norm(vectors, axis=1),
                    children=tuple(
                        np.array(sorted(below[m] for m in c.member_ids), dtype=np.int64)
                        for c in clusters
                    ),
                )
            )

    @property
    def hierarchy(self) -> Hierarchy:
        return self._hierarchy

    @property
    def mode(self) -> AggregationMode:
        return self._mode

    @property
    def cluster_size(self) -> int:
        return self._hierarchy.cluster_size

    @property
    def granularity(self) -> int:
        return self._hierarchy.granularity

    @property
    def dim(self) -> int:
        return int(self._levels[0].vectors.shape[1])

    def __len__(self) -> int:
        return len(self.records)

    def level_size(self, level: int) -> int:
        return len(self._levels[level].ids)

    def _query_vector(self, query: MemoryVector) -> tuple[np.ndarray, float]:
        if len(self.records) == 0:
            raise EmptyIndex("index holds no panoramas")
        values = query.values
        if values.shape[0] != self.dim:
            raise DimensionMismatch(
                f"query dim {values.shape[0]} vs index dim {self.dim}"
            )
        return values, float(np.linalg.norm(values))

    def _scores(self, level: int, rows: np.ndarray | None, q: np.ndarray, qn: float):
        lvl = self._levels[level]
        if rows is None:
            sims = (lvl.vectors @ q) / (lvl.norms * qn)
        else:
            sims = (lvl.vectors[rows] @ q) / (lvl.norms[rows] * qn)
        return np.clip(sims, -1.0, 1.0)

    def full_scan(
        self, query: MemoryVector, top_k: int
    ) -> tuple[CandidateSet, SearchStats]:
        """Exact top-k by cosine over all panoramas; ties break by id."""
        start = time.perf_counter()
        q, qn = self._query_vector(query)
        sims = self._scores(0, None, q, qn)
        # records are id-sorted, so a stable sort on -sims ties by id
        order = np.argsort(-sims, kind="stable")[:top_k]
        entries = tuple(
            Candidate(
                pano_id=self.records[i].pano_id,
                location=self.records[i].location,
                query_similarity=float(sims[i]),
                memory=self.records[i].memory,
            )
            for i in order
        )
        n = len(self.records)
        stats = SearchStats(n, n, time.perf_counter() - start)
        return CandidateSet(entries), stats

    def search(
        self, query: MemoryVector, config: SearchConfig
    ) -> tuple[CandidateSet, SearchStats]:
        """Answer a query at the configured granularity.

        Granularity 0 is exactly :meth:`full_scan`. Above that, beam
        descent re-scores the pooled children of the kept clusters at each
        level and finally ranks all surviving panoramas.
        """
        if config.granularity > self.granularity:
            raise InvalidConfig(
                f"search granularity {config.granularity} exceeds index "
                f"granularity {self.granularity}"
            )
        if config.granularity == 0:
            return self.full_scan(query, config.top_k)

        start = time.perf_counter()
        q, qn = self._query_vector(query)
        evaluations = 0
        level = config.granularity
        rows = np.arange(self.level_size(level), dtype=np.int64)
        while level >= 1:
            sims = self._scores(level, rows, q, qn)
            evaluations += len(rows)
            keep = rows[np.argsort(-sims, kind="stable")[: config.beam_width]]
            children = self._levels[level].children
            rows = np.sort(np.concatenate([children[i] for i in keep]))
            level -= 1
        sims = self._scores(0, rows, q, qn)
        evaluations += len(rows)
        order = np.argsort(-sims, kind="stable")[: config.top_k]
        entries = tuple(
            Candidate(
                pano_id=self.records[rows[i]].pano_id,
                location=self.records[rows[i]].location,
                query_similarity=float(sims[i]),
                memory=self.records[rows[i]].memory,
            )
            for i in order
        )
        stats = SearchStats(evaluations, evaluations, time.perf_counter() - start)
        return CandidateSet(entries), stats


def build_index(
    panos: Sequence[PanoRecord],
    cluster_size: int,
    granularity: int,
    mode: AggregationMode,
) -> SearchIndex:
    """Validate records, build the hierarchy and wrap it for searching.

    Memory values, coordinates and the ridge epsilon are rounded to
    float32 precision here (views are dropped; they play no part in
    search), so that persisting and reloading the index cannot change any
    observable result.
    """
    for record in panos:
        validate_record(record)
    mode = AggregationMode(mode.kind, float(np.float32(mode.ridge_epsilon)))
    quantized = [
        PanoRecord(
            pano_id=r.pano_id,
            location=_quantize_point(r.location),
            memory=_quantize_memory(r.memory),
            views=None,
        )
        for r in panos
    ]
    hierarchy = build_hierarchy(quantized, cluster_size, granularity, mode)
    levels = [hierarchy.levels[0]]
    for depth in range(1, granularity + 1):
        levels.append(
            tuple(
                Cluster(
                    cluster_id=c.cluster_id,
                    member_ids=c.member_ids,
                    centroid=_quantize_point(c.centroid),
                    size=c.size,
                    memory=_quantize_memory(c.memory),
                )
                for c in hierarchy.levels[depth]
            )
        )
    hierarchy = Hierarchy(
        levels=tuple(levels), cluster_size=cluster_size, granularity=granularity
    )
    return SearchIndex(hierarchy, mode)


# ---- persistence ----------------------------------------------------------
#
# Layout (all little-endian, all floats float32):
#   "PLIX" | u16 version | u8 mode | f32 ridge | u32 dim | u32 cluster_size
#   | u32 granularity | level 0 | ... | level M | 8-byte checksum of all
#   preceding bytes.
# Level 0 entry:  id | f32 x | f32 y | u32 member_count | u8 regularized
#                 | f32[dim] values
# Level l entry:  id | f32 cx | f32 cy | u32 leaf_size | u32 member_count
#                 | u8 regularized | u32 n_children | u32[n] child indices
#                 | f32[dim] values
# Strings are u16-length-prefixed UTF-8.


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise ChecksumMismatch("index file is truncated")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return out

    def take_str(self) -> str:
        (length,) = self.take("<H")
        if self.pos + length > len(self.buf):
            raise ChecksumMismatch("index file is truncated")
        out = self.buf[self.pos : self.pos + length].decode("utf-8")
        self.pos += length
        return out

    def take_f32(self, count: int) -> np.ndarray:
        size = 4 * count
        if self.pos + size > len(self.buf):
            raise ChecksumMismatch("index file is truncated")
        out = np.frombuffer(self.buf, dtype="<f4", count=count, offset=self.pos)
        self.pos += size
        return np.asarray(out, dtype=np.float64)

    def take_u32(self, count: int) -> np.ndarray:
        size = 4 * count
        if self.pos + size > len(self.buf):
            raise ChecksumMismatch("index file is truncated")
        out = np.frombuffer(self.buf, dtype="<u4", count=count, offset=self.pos)
        self.pos += size
        return out


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=_CHECKSUM_BYTES).digest()


def save_index(index: SearchIndex, destination) -> None:
    """Write the index to a versioned, checksummed binary container."""
    h = index.hierarchy
    parts = [
        INDEX_MAGIC,
        struct.pack(
            "<HBfIII",
            INDEX_VERSION,
            0 if index.mode.kind is VectorMode.SUM else 1,
            index.mode.ridge_epsilon,
            index.dim,
            h.cluster_size,
            h.granularity,
        ),
    ]
    parts.append(struct.pack("<I", len(index.records)))
    for r in index.records:
        parts.append(_pack_str(r.pano_id))
        parts.append(
            struct.pack(
                "<ffIB",
                r.location.x,
                r.location.y,
                r.memory.member_count,
                int(r.memory.regularized),
            )
        )
        parts.append(np.asarray(r.memory.values, dtype="<f4").tobytes())
    for depth in range(1, h.granularity + 1):
        below = {cid: i for i, cid in enumerate(
            c.cluster_id if depth > 1 else c.pano_id for c in h.levels[depth - 1]
        )}
        clusters = h.levels[depth]
        parts.append(struct.pack("<I", len(clusters)))
        for c in clusters:
            parts.append(_pack_str(c.cluster_id))
            parts.append(
                struct.pack(
                    "<ffIIB",
                    c.centroid.x,
                    c.centroid.y,
                    c.size,
                    c.memory.member_count,
                    int(c.memory.regularized),
                )
            )
            child_idx = sorted(below[m] for m in c.member_ids)
            parts.append(struct.pack("<I", len(child_idx)))
            parts.append(np.asarray(child_idx, dtype="<u4").tobytes())
            parts.append(np.asarray(c.memory.values, dtype="<f4").tobytes())
    payload = b"".join(parts)
    try:
        with open(destination, "wb") as fh:
            fh.write(payload)
            fh.write(_checksum(payload))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_index(source) -> SearchIndex:
    """Read an index container, verifying version and checksum."""
    try:
        with open(source, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if len(blob) < len(INDEX_MAGIC) + 2 + _CHECKSUM_BYTES:
        raise ChecksumMismatch("index file is truncated")
    if blob[:4] != INDEX_MAGIC:
        raise FormatVersionMismatch("not an index file (bad magic)")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != INDEX_VERSION:
        raise FormatVersionMismatch(f"unsupported index version {version}")
    payload, stored = blob[:-_CHECKSUM_BYTES], blob[-_CHECKSUM_BYTES:]
    if _checksum(payload) != stored:
        raise ChecksumMismatch("index file checksum does not match")

    reader = _Reader(payload)
    reader.pos = 6
    mode_byte, ridge, dim, cluster_size, granularity = reader.take("<BfIII")
    mode = AggregationMode(
        VectorMode.SUM if mode_byte == 0 else VectorMode.PINV, float(ridge)
    )

    (count,) = reader.take("<I")
    records = []
    for _ in range(count):
        pano_id = reader.take_str()
        x, y, member_count, regularized = reader.take("<ffIB")
        values = reader.take_f32(dim)
        records.append(
            PanoRecord(
                pano_id=pano_id,
                location=GeoPoint(float(x), float(y)),
                memory=MemoryVector(
                    values=values,
                    mode=mode.kind,
                    member_count=member_count,
                    regularized=bool(regularized),
                ),
            )
        )
    levels: list[tuple] = [tuple(records)]
    for _ in range(granularity):
        (count,) = reader.take("<I")
        below_ids = [
            c.pano_id if len(levels) == 1 else c.cluster_id for c in levels[-1]
        ]
        clusters = []
        for _ in range(count):
            cluster_id = reader.take_str()
            cx, cy, leaf_size, member_count, regularized = reader.take("<ffIIB")
            (n_children,) = reader.take("<I")
            child_idx = reader.take_u32(n_children)
            values = reader.take_f32(dim)
            clusters.append(
                Cluster(
                    cluster_id=cluster_id,
                    member_ids=tuple(below_ids[i] for i in child_idx),
                    centroid=GeoPoint(float(cx), float(cy)),
                    size=int(leaf_size),
                    memory=MemoryVector(
                        values=values,
                        mode=mode.kind,
                        member_count=int(member_count),
                        regularized=bool(regularized),
                    ),
                )
            )
        levels.append(tuple(clusters))
    hierarchy = Hierarchy(
        levels=tuple(levels), cluster_size=cluster_size, granularity=granularity
    )
    return SearchIndex(hierarchy, mode)
