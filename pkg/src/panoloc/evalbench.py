"""Desk-scale evaluation bench: synthetic datasets, recall and error
metrics, and the experiment driver that sweeps index configurations.

The synthetic generator stands in for real descriptor extraction. Each
location's base descriptor interpolates a set of random unit anchor
vectors with inverse-square distance weights, so cosine similarity decays
smoothly with geographic distance, which is the one property the search
and estimation algorithms rely on. Everything is deterministic per seed.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aggregation import AggregationMode, aggregate_panorama, sum_vector
from .core import CandidateSet, FeatureVector, GeoPoint, PanoRecord, VIEW_KEYS
from .errors import InvalidConfig, EmptyInput, LengthMismatch
from .geoposition import estimate_position
from .index import SearchConfig, build_index

DEFAULT_RECALL_RADIUS_M = 25.0
DEFAULT_RECALL_NS = (1, 5, 10, 15, 20)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic dataset generator.

    ``query_offset`` switches between queries at database locations
    (survey-style) and queries displaced by up to one grid spacing
    (street-level-style); the latter pairs naturally with a higher
    ``query_noise_sigma``.
    """

    pano_count: int
    dim: int
    street_spacing: float = 5.0
    anchor_count: int = 64
    view_noise_sigma: float = 0.0
    query_noise_sigma: float = 0.0
    query_count: int = 100
    query_offset: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.pano_count < 1:
            raise InvalidConfig("pano_count must be >= 1")
        if self.dim < 8:
            raise InvalidConfig("dim must be >= 8")
        if self.street_spacing <= 0:
            raise InvalidConfig("street_spacing must be positive")
        if self.anchor_count < 1:
            raise InvalidConfig("anchor_count must be >= 1")
        if self.view_noise_sigma < 0 or self.query_noise_sigma < 0:
            raise InvalidConfig("noise sigmas must be >= 0")
        if self.query_count < 0:
            raise InvalidConfig("query_count must be >= 0")


@dataclass(frozen=True)
class EvalReport:
    """One result row: the configuration echo plus the measured metrics."""

    cluster_size: int
    granularity: int
    beam_width: int
    mode: str
    top_k: int
    recall_at: dict[int, float] = field(default_factory=dict)
    median_error_baseline: float = float("nan")
    median_error_reranked: float | None = None
    mean_similarity_evaluations: float = float("nan")
    wall_time_ms: float = float("nan")


def _f32_round(values: np.ndarray) -> np.ndarray:
    # keep generated descriptors float32-representable so the on-disk
    # feature format round-trips bit-exactly
    return np.asarray(np.asarray(values, dtype=np.float32), dtype=np.float64)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    return matrix / np.linalg.norm(matrix, axis=1)[:, None]


def _base_field(
    xy: np.ndarray, anchors_xy: np.ndarray, anchors_vec: np.ndarray, soft: float
) -> np.ndarray:
    """Inverse-square-distance interpolation of anchor vectors at xy."""
    d2 = ((xy[:, None, :] - anchors_xy[None, :, :]) ** 2).sum(axis=2)
    weights = 1.0 / (d2 + soft * soft)
    return _unit_rows(weights @ anchors_vec)


def synth_dataset(
    config: SynthConfig, mode: AggregationMode | None = None
) -> tuple[list[PanoRecord], list[tuple[dict[str, FeatureVector], GeoPoint]]]:
    """Generate a synthetic panorama database and query set.

    Panoramas sit on a square grid at the configured spacing. Each gets
    four views (base descriptor plus independent noise, unit-normalized);
    queries are noise-perturbed copies at database locations, or fresh
    descriptors at offset locations when ``query_offset`` is set. Record
    memory vectors are aggregated with ``mode`` (least-squares weights by
    default). Bit-identical output for a fixed config.
    """
    config.validate()
    from .aggregation import PINV

    mode = mode or PINV
    rng = np.random.default_rng(config.seed)

    cols = int(np.ceil(np.sqrt(config.pano_count)))
    idx = np.arange(config.pano_count)
    xy = np.column_stack((idx % cols, idx // cols)).astype(np.float64)
    xy *= config.street_spacing

    anchors_vec = _unit_rows(rng.standard_normal((config.anchor_count, config.dim)))
    lo = xy.min(axis=0)
    hi = np.maximum(xy.max(axis=0), lo + config.street_spacing)
    anchors_xy = rng.uniform(lo, hi, size=(config.anchor_count, 2))
    soft = 2.0 * config.street_spacing

    base = _base_field(xy, anchors_xy, anchors_vec, soft)
    noise = rng.standard_normal((config.pano_count, 4, config.dim))
    raw_views = base[:, None, :] + config.view_noise_sigma * noise
    views_arr = _f32_round(raw_views / np.linalg.norm(raw_views, axis=2)[..., None])

    database: list[PanoRecord] = []
    for i in range(config.pano_count):
        views = {
            key: FeatureVector(views_arr[i, v]) for v, key in enumerate(VIEW_KEYS)
        }
        database.append(
            PanoRecord(
                pano_id=f"p{i:06d}",
                location=GeoPoint(float(xy[i, 0]), float(xy[i, 1])),
                memory=aggregate_panorama(views, mode),
                views=views,
            )
        )

    queries: list[tuple[dict[str, FeatureVector], GeoPoint]] = []
    if config.query_count > 0:
        replace = config.query_count > config.pano_count
        picks = rng.choice(config.pano_count, size=config.query_count, replace=replace)
        if config.query_offset:
            offsets = rng.uniform(0.0, config.street_spacing, size=(config.query_count, 2))
            q_xy = xy[picks] + offsets
            q_base = _base_field(q_xy, anchors_xy, anchors_vec, soft)
        for qi, pick in enumerate(picks):
            if config.query_offset:
                truth = GeoPoint(float(q_xy[qi, 0]), float(q_xy[qi, 1]))
                source = np.repeat(q_base[qi][None, :], 4, axis=0)
            else:
                truth = database[pick].location
                source = views_arr[pick]
            if config.query_noise_sigma == 0.0 and not config.query_offset:
                qviews = dict(database[pick].views)
            else:
                perturbed = source + config.query_noise_sigma * rng.standard_normal(
                    (4, config.dim)
                )
                perturbed = _f32_round(
                    perturbed / np.linalg.norm(perturbed, axis=1)[:, None]
                )
                qviews = {
                    key: FeatureVector(perturbed[v]) for v, key in enumerate(VIEW_KEYS)
                }
            queries.append((qviews, truth))
    return database, queries


def positioning_error(estimate: GeoPoint, truth: GeoPoint) -> float:
    """Euclidean distance in meters between estimate and ground truth."""
    return float(np.hypot(estimate.x - truth.x, estimate.y - truth.y))


def median(values: Sequence[float]) -> float:
    """Lower median: for even counts, the smaller of the two middle values."""
    if len(values) == 0:
        raise EmptyInput("median of no values")
    ordered = sorted(values)
    return float(ordered[(len(ordered) - 1) // 2])


def recall_at_n(
    result_sets: Sequence[CandidateSet],
    truths: Sequence[GeoPoint],
    n: int,
    radius: float = DEFAULT_RECALL_RADIUS_M,
) -> float:
    """Fraction of queries whose top-n has a candidate within the radius.

    The radius is inclusive: a candidate at exactly ``radius`` meters
    counts as found.
    """
    if len(result_sets) != len(truths):
        raise LengthMismatch(
            f"{len(result_sets)} result sets vs {len(truths)} truths"
        )
    if n < 1:
        raise InvalidConfig("n must be >= 1")
    hits = 0
    for candidates, truth in zip(result_sets, truths):
        for cand in candidates.entries[:n]:
            if cand.location.distance_to(truth) <= radius:
                hits += 1
                break
    return hits / len(result_sets) if result_sets else 0.0


def rebuild_memories(
    database: Sequence[PanoRecord], mode: AggregationMode
) -> list[PanoRecord]:
    """Re-aggregate record memory vectors from their views with ``mode``.

    Records without stored views (single-vector ingestion) are kept as-is.
    """
    out = []
    for record in database:
        if record.views is None:
            out.append(record)
        else:
            out.append(
                PanoRecord(
                    pano_id=record.pano_id,
                    location=record.location,
                    memory=aggregate_panorama(record.views, mode),
                    views=record.views,
                )
            )
    return out


def run_experiment(
    database: Sequence[PanoRecord],
    queries: Sequence[tuple[dict[str, FeatureVector], GeoPoint]],
    index_configs: Sequence[tuple[int, int, int, AggregationMode]],
    top_ks: Sequence[int],
    rerank: bool = True,
    query_mode: str = "pan2pan",
    im2pan_view: str = "N",
    recall_ns: Sequence[int] = DEFAULT_RECALL_NS,
    radius: float = DEFAULT_RECALL_RADIUS_M,
) -> list[EvalReport]:
    """Sweep (cluster_size, granularity, beam, mode) configurations.

    For each configuration the database memory vectors are re-aggregated
    with its mode, an index is built, and every query is answered once at
    the configuration's granularity ("pan2pan" aggregates the four query
    views; "im2pan" uses the single named view). One report is produced
    per configuration and requested top_k: recall at each requested depth,
    the median positioning error of the baseline and (optionally)
    re-ranked estimates over the top_k candidates, and the mean number of
    similarity evaluations per query. Deterministic apart from wall time.
    """
    if query_mode not in ("pan2pan", "im2pan"):
        raise InvalidConfig(f"unknown query mode {query_mode!r}")
    if im2pan_view not in VIEW_KEYS:
        raise InvalidConfig(f"im2pan view must be one of {VIEW_KEYS}")
    depth = max(tuple(recall_ns) + tuple(top_ks))
    reports: list[EvalReport] = []
    for cluster_size, granularity, beam_width, mode in index_configs:
        records = rebuild_memories(database, mode)
        index = build_index(records, cluster_size, granularity, mode)
        config = SearchConfig(top_k=depth, beam_width=beam_width, granularity=granularity)

        start = time.perf_counter()
        result_sets: list[CandidateSet] = []
        truths: list[GeoPoint] = []
        eval_counts: list[int] = []
        for views, truth in queries:
            if query_mode == "pan2pan":
                query_vec = aggregate_panorama(views, mode)
            else:
                query_vec = sum_vector([views[im2pan_view]])
            candidates, stats = index.search(query_vec, config)
            result_sets.append(candidates)
            truths.append(truth)
            eval_counts.append(stats.similarity_evaluations)
        wall_ms = (time.perf_counter() - start) * 1000.0

        recalls = {n: recall_at_n(result_sets, truths, n, radius) for n in recall_ns}
        mean_evals = float(np.mean(eval_counts)) if eval_counts else float("nan")
        for top_k in top_ks:
            base_errors = []
            rerank_errors = []
            for candidates, truth in zip(result_sets, truths):
                subset = candidates.top(top_k)
                base_errors.append(
                    positioning_error(estimate_position(subset, False).position, truth)
                )
                if rerank:
                    rerank_errors.append(
                        positioning_error(
                            estimate_position(subset, True).position, truth
                        )
                    )
            reports.append(
                EvalReport(
                    cluster_size=cluster_size,
                    granularity=granularity,
                    beam_width=beam_width,
                    mode=mode.kind.value,
                    top_k=top_k,
                    recall_at=recalls,
                    median_error_baseline=median(base_errors) if base_errors else float("nan"),
                    median_error_reranked=median(rerank_errors) if rerank_errors else None,
                    mean_similarity_evaluations=mean_evals,
                    wall_time_ms=wall_ms,
                )
            )
    return reports


def _csv_header(recall_ns: Sequence[int]) -> list[str]:
    return (
        ["N", "M", "beam", "top_k"]
        + [f"recall@{n}" for n in recall_ns]
        + ["median_error_baseline", "median_error_reranked", "sim_evals", "wall_ms"]
    )


def report_rows(
    reports: Sequence[EvalReport], recall_ns: Sequence[int] = DEFAULT_RECALL_NS
) -> list[list[str]]:
    rows = [_csv_header(recall_ns)]
    for r in reports:
        rows.append(
            [str(r.cluster_size), str(r.granularity), str(r.beam_width), str(r.top_k)]
            + [repr(r.recall_at[n]) for n in recall_ns]
            + [
                repr(r.median_error_baseline),
                "" if r.median_error_reranked is None else repr(r.median_error_reranked),
                repr(r.mean_similarity_evaluations),
                repr(r.wall_time_ms),
            ]
        )
    return rows


def write_report_csv(
    reports: Sequence[EvalReport],
    destination,
    recall_ns: Sequence[int] = DEFAULT_RECALL_NS,
) -> None:
    """Write one CSV row per report, suitable for plotting recall curves."""
    with open(destination, "w", newline="") as fh:
        csv.writer(fh).writerows(report_rows(reports, recall_ns))


def format_report_table(
    reports: Sequence[EvalReport], recall_ns: Sequence[int] = DEFAULT_RECALL_NS
) -> str:
    """Fixed-width text table of the same rows the CSV carries."""
    rows = report_rows(reports, recall_ns)
    display = [
        [f"{float(c):.4f}" if ("." in c or "e" in c) and c else c for c in row]
        if i > 0
        else row
        for i, row in enumerate(rows)
    ]
    widths = [max(len(row[i]) for row in display) for i in range(len(rows[0]))]
    lines = [
        "  ".join(cell.rjust(widths[i]) for i, cell in enumerate(row))
        for row in display
    ]
    return "\n".join(lines)


def render_report_csv(
    reports: Sequence[EvalReport], recall_ns: Sequence[int] = DEFAULT_RECALL_NS
) -> str:
    buf = io.StringIO()
    csv.writer(buf).writerows(report_rows(reports, recall_ns))
    return buf.getvalue()
