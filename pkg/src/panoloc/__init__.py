"""Geopositioning engine for panorama databases.

Matches query descriptors against georeferenced panoramic memory vectors
through a geographically clustered hierarchy, then estimates coordinates
by cross-similarity re-ranking and a similarity-weighted center of
gravity.
"""

from . import errors
from .aggregation import (
    PINV,
    SUM,
    AggregationMode,
    aggregate_memories,
    aggregate_panorama,
    cosine_similarity,
    parse_mode,
    pinv_vector,
    sum_vector,
)
from .core import (
    VIEW_KEYS,
    Candidate,
    CandidateSet,
    FeatureVector,
    GeoPoint,
    MemoryVector,
    PanoRecord,
    VectorMode,
    validate_candidate_set,
    validate_record,
)
from .evalbench import (
    EvalReport,
    SynthConfig,
    median,
    positioning_error,
    recall_at_n,
    run_experiment,
    synth_dataset,
    write_report_csv,
)
from .geocluster import Cluster, Hierarchy, build_hierarchy, centroid, cluster_level
from .geoposition import (
    GeoEstimate,
    RankedCandidate,
    center_of_gravity,
    estimate_position,
    filter_by_mean,
    rerank,
)
from .index import (
    SearchConfig,
    SearchIndex,
    SearchStats,
    build_index,
    load_index,
    save_index,
)
from .io import read_features, write_features

__version__ = "0.1.0"

__all__ = [
    "AggregationMode",
    "Candidate",
    "CandidateSet",
    "Cluster",
    "EvalReport",
    "FeatureVector",
    "GeoEstimate",
    "GeoPoint",
    "Hierarchy",
    "MemoryVector",
    "PINV",
    "PanoRecord",
    "RankedCandidate",
    "SUM",
    "SearchConfig",
    "SearchIndex",
    "SearchStats",
    "SynthConfig",
    "VIEW_KEYS",
    "VectorMode",
    "aggregate_memories",
    "aggregate_panorama",
    "build_hierarchy",
    "build_index",
    "center_of_gravity",
    "centroid",
    "cluster_level",
    "cosine_similarity",
    "errors",
    "estimate_position",
    "filter_by_mean",
    "load_index",
    "median",
    "parse_mode",
    "pinv_vector",
    "positioning_error",
    "read_features",
    "recall_at_n",
    "rerank",
    "run_experiment",
    "save_index",
    "sum_vector",
    "synth_dataset",
    "validate_candidate_set",
    "validate_record",
    "write_features",
    "write_report_csv",
]
