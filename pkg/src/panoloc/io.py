"""Bit-exact descriptor ingestion and persistence.

Descriptors cross the process boundary as a raw little-endian float32
array file ("MVEC") plus a CSV sidecar that georeferences each vector and
names its view. A panorama appears either as four cardinal view rows
(N, E, S, W) whose memory vector is aggregated at read time, or as a
single pre-aggregated PANO row.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aggregation import AggregationMode, aggregate_panorama
from .core import (
    VIEW_KEYS,
    FeatureVector,
    GeoPoint,
    MemoryVector,
    PanoRecord,
    validate_record,
)
from .errors import (
    BadMagic,
    CountMismatch,
    DimensionMismatch,
    DuplicateRow,
    InvalidRow,
    IoFailure,
    MissingView,
    NonFiniteValue,
    VersionMismatch,
)

FEATURE_MAGIC = b"MVEC"
FEATURE_VERSION = 1
_DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<4sHIIB")  # magic, version, count, dim, dtype

META_FIELDS = ("id", "x", "y", "view")
PANO_VIEW = "PANO"


@dataclass(frozen=True)
class MetaRow:
    """One sidecar row; row order aligns 1:1 with the vector order."""

    pano_id: str
    x: float
    y: float
    view: str


def write_vectors(vectors: np.ndarray, destination) -> None:
    """Write an (n, d) float array as a little-endian float32 vector file."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2:
        arr = arr.reshape(len(arr), -1) if len(arr) else arr.reshape(0, 0)
    count, dim = arr.shape
    try:
        with open(destination, "wb") as fh:
            fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, count, dim, _DTYPE_FLOAT32))
            fh.write(np.asarray(arr, dtype="<f4").tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_vectors(source) -> np.ndarray:
    """Read a vector file back into float64; exact for float32 payloads."""
    try:
        with open(source, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if len(blob) < _HEADER.size or blob[:4] != FEATURE_MAGIC:
        raise BadMagic("not a feature vector file")
    _, version, count, dim, dtype = _HEADER.unpack_from(blob)
    if version != FEATURE_VERSION:
        raise VersionMismatch(f"unsupported feature file version {version}")
    if dtype != _DTYPE_FLOAT32:
        raise VersionMismatch(f"unsupported element type {dtype}")
    payload = blob[_HEADER.size :]
    if len(payload) != count * dim * 4:
        raise CountMismatch(
            f"header promises {count}x{dim} float32 "
            f"({count * dim * 4} bytes), payload has {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    return np.asarray(data, dtype=np.float64)


def write_meta(rows: Sequence[MetaRow], destination) -> None:
    try:
        with open(destination, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(META_FIELDS)
            for row in rows:
                writer.writerow([row.pano_id, repr(row.x), repr(row.y), row.view])
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_meta(source) -> list[MetaRow]:
    try:
        with open(source, "r", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != list(META_FIELDS):
                raise InvalidRow(f"bad meta header: {header!r}")
            rows = []
            for line_no, raw in enumerate(reader, start=2):
                if len(raw) != 4:
                    raise InvalidRow(f"meta line {line_no}: expected 4 fields")
                pano_id, x_text, y_text, view = raw
                if view not in VIEW_KEYS and view != PANO_VIEW:
                    raise InvalidRow(f"meta line {line_no}: unknown view {view!r}")
                try:
                    x, y = float(x_text), float(y_text)
                except ValueError as exc:
                    raise NonFiniteValue(
                        f"meta line {line_no}: unparsable coordinate"
                    ) from exc
                rows.append(MetaRow(pano_id, x, y, view))
        return rows
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def write_features(
    records: Sequence[PanoRecord], feature_path, meta_path
) -> None:
    """Persist records as a vector file plus sidecar.

    Records with views emit four cardinal rows; records without views emit
    one PANO row holding the memory vector. All inputs are checked before
    any byte is written.
    """
    dims = {r.memory.dim for r in records}
    if len(dims) > 1:
        raise DimensionMismatch(f"records have mixed dims: {sorted(dims)}")
    vectors: list[np.ndarray] = []
    rows: list[MetaRow] = []
    for record in records:
        validate_record(record)
        if record.views is not None:
            for key in VIEW_KEYS:
                vectors.append(record.views[key].values)
                rows.append(
                    MetaRow(record.pano_id, record.location.x, record.location.y, key)
                )
        else:
            vectors.append(record.memory.values)
            rows.append(
                MetaRow(record.pano_id, record.location.x, record.location.y, PANO_VIEW)
            )
    dim = dims.pop() if dims else 0
    matrix = (
        np.array(vectors) if vectors else np.zeros((0, dim), dtype=np.float64)
    )
    write_vectors(matrix, feature_path)
    write_meta(rows, meta_path)


def read_features(
    feature_path, meta_path, mode: AggregationMode
) -> list[PanoRecord]:
    """Load records from a vector file and its sidecar.

    Four-view panoramas get their memory vector aggregated with ``mode``;
    PANO rows are taken as pre-aggregated memory vectors. Records come
    back in first-appearance order and are fully validated.
    """
    vectors = read_vectors(feature_path)
    rows = read_meta(meta_path)
    if len(rows) != vectors.shape[0]:
        raise CountMismatch(
            f"feature file has {vectors.shape[0]} vectors, meta has {len(rows)} rows"
        )

    order: list[str] = []
    grouped: dict[str, dict[str, int]] = {}
    coords: dict[str, tuple[float, float]] = {}
    for i, row in enumerate(rows):
        if row.pano_id not in grouped:
            grouped[row.pano_id] = {}
            coords[row.pano_id] = (row.x, row.y)
            order.append(row.pano_id)
        elif coords[row.pano_id] != (row.x, row.y):
            raise InvalidRow(
                f"rows of panorama {row.pano_id!r} disagree on coordinates"
            )
        if row.view in grouped[row.pano_id]:
            raise DuplicateRow(f"duplicate row ({row.pano_id!r}, {row.view!r})")
        grouped[row.pano_id][row.view] = i

    records = []
    for pano_id in order:
        views = grouped[pano_id]
        location = GeoPoint(*coords[pano_id])
        if PANO_VIEW in views:
            if len(views) != 1:
                raise DuplicateRow(
                    f"panorama {pano_id!r} mixes a PANO row with view rows"
                )
            memory = MemoryVector(
                values=vectors[views[PANO_VIEW]],
                mode=mode.kind,
                member_count=1,
            )
            record = PanoRecord(pano_id=pano_id, location=location, memory=memory)
        else:
            missing = [k for k in VIEW_KEYS if k not in views]
            if missing:
                raise MissingView(f"panorama {pano_id!r} lacks views {missing}")
            view_map = {k: FeatureVector(vectors[views[k]]) for k in VIEW_KEYS}
            record = PanoRecord(
                pano_id=pano_id,
                location=location,
                memory=aggregate_panorama(view_map, mode),
                views=view_map,
            )
        validate_record(record)
        records.append(record)
    return records
