"""Command-line surface tying the offline (database build) and online
(query and estimation) halves together.

Exit codes: 0 success, 1 usage error, 2 data-format error, 3 internal
error. Data errors print ``error: <Name>: <detail>`` on stderr, where
<Name> is the error class from the shared vocabulary.
"""
from __future__ import annotations

import argparse
import sys

from .aggregation import parse_mode, sum_vector, aggregate_panorama
from .core import VIEW_KEYS, GeoPoint, PanoRecord
from .errors import InvalidConfig, PanolocError
from .evalbench import (
    DEFAULT_RECALL_RADIUS_M,
    SynthConfig,
    format_report_table,
    run_experiment,
    synth_dataset,
    write_report_csv,
)
from .geoposition import estimate_position
from .index import SearchConfig, build_index, load_index, save_index
from .io import read_features, write_features


class _UsageError(Exception):
    pass


def _add_mode_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--mode",
        choices=("sum", "pinv"),
        default="pinv",
        help="memory vector aggregation (default: pinv)",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panoloc",
        description="Panorama-database geopositioning engine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic database and query set")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--spacing", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--anchors", type=int, default=64)
    p.add_argument("--view-noise", type=float, default=0.0)
    p.add_argument("--query-noise", type=float, default=0.0)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--offset-queries", action="store_true",
                   help="displace queries by up to one spacing from the grid")
    p.add_argument("--out-dir", required=True)
    _add_mode_flag(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("build", help="build a search index from feature files")
    p.add_argument("--features", required=True)
    p.add_argument("--meta", required=True)
    _add_mode_flag(p)
    p.add_argument("--cluster-size", type=int, default=4)
    p.add_argument("--granularity", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("query", help="rank database panoramas for each query")
    p.add_argument("--index", required=True)
    p.add_argument("--query-features", required=True)
    p.add_argument("--query-meta", required=True)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--granularity", type=int, default=0)
    p.add_argument("--im2pan-view", choices=VIEW_KEYS, default=None,
                   help="query with this single view instead of all four")
    _add_mode_flag(p)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("estimate", help="estimate query coordinates")
    p.add_argument("--index", required=True)
    p.add_argument("--query-features", required=True)
    p.add_argument("--query-meta", required=True)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--granularity", type=int, default=0)
    p.add_argument("--no-rerank", action="store_true")
    _add_mode_flag(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("evaluate", help="sweep index configurations and report")
    p.add_argument("--features", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--query-features", required=True)
    p.add_argument("--query-meta", required=True)
    p.add_argument(
        "--index-configs",
        nargs="+",
        required=True,
        metavar="N,M,BEAM,MODE",
        help="one or more cluster_size,granularity,beam,mode tuples",
    )
    p.add_argument("--top-ks", type=int, nargs="+", default=[5])
    p.add_argument("--radius", type=float, default=DEFAULT_RECALL_RADIUS_M)
    p.add_argument("--query-mode", choices=("pan2pan", "im2pan"), default="pan2pan")
    p.add_argument("--im2pan-view", choices=VIEW_KEYS, default="N")
    p.add_argument("--no-rerank", action="store_true")
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_evaluate)
    return parser


def _cmd_synth(args) -> int:
    import os

    config = SynthConfig(
        pano_count=args.count,
        dim=args.dim,
        street_spacing=args.spacing,
        anchor_count=args.anchors,
        view_noise_sigma=args.view_noise,
        query_noise_sigma=args.query_noise,
        query_count=args.queries,
        query_offset=args.offset_queries,
        seed=args.seed,
    )
    mode = parse_mode(args.mode)
    database, queries = synth_dataset(config, mode)
    os.makedirs(args.out_dir, exist_ok=True)
    write_features(
        database,
        os.path.join(args.out_dir, "database.mvec"),
        os.path.join(args.out_dir, "database.meta.csv"),
    )
    query_records = [
        PanoRecord(
            pano_id=f"q{i:06d}",
            location=truth,
            memory=aggregate_panorama(views, mode),
            views=views,
        )
        for i, (views, truth) in enumerate(queries)
    ]
    write_features(
        query_records,
        os.path.join(args.out_dir, "queries.mvec"),
        os.path.join(args.out_dir, "queries.meta.csv"),
    )
    print(f"wrote {len(database)} panoramas and {len(queries)} queries to {args.out_dir}")
    return 0


def _cmd_build(args) -> int:
    mode = parse_mode(args.mode)
    records = read_features(args.features, args.meta, mode)
    index = build_index(records, args.cluster_size, args.granularity, mode)
    save_index(index, args.out)
    sizes = "/".join(str(index.level_size(l)) for l in range(index.granularity + 1))
    print(f"indexed {len(index)} panoramas (level sizes {sizes}) -> {args.out}")
    return 0


def _query_vector(record: PanoRecord, mode, im2pan_view: str | None):
    if im2pan_view is not None:
        if record.views is None:
            raise InvalidConfig(
                f"query {record.pano_id!r} has no views; cannot query im2pan"
            )
        return sum_vector([record.views[im2pan_view]])
    return record.memory


def _cmd_query(args) -> int:
    mode = parse_mode(args.mode)
    index = load_index(args.index)
    queries = read_features(args.query_features, args.query_meta, mode)
    config = SearchConfig(
        top_k=args.top_k, beam_width=args.beam, granularity=args.granularity
    )
    for record in queries:
        vec = _query_vector(record, mode, args.im2pan_view)
        candidates, stats = index.search(vec, config)
        print(f"# query {record.pano_id}")
        print("pano_id\tsimilarity\tx\ty")
        for cand in candidates:
            print(
                f"{cand.pano_id}\t{cand.query_similarity!r}"
                f"\t{cand.location.x!r}\t{cand.location.y!r}"
            )
        print(
            f"similarity_evaluations={stats.similarity_evaluations} "
            f"nodes_visited={stats.nodes_visited} "
            f"wall_ms={stats.wall_time * 1000.0:.3f}",
            file=sys.stderr,
        )
    return 0


def _cmd_estimate(args) -> int:
    mode = parse_mode(args.mode)
    index = load_index(args.index)
    queries = read_features(args.query_features, args.query_meta, mode)
    config = SearchConfig(
        top_k=args.top_k, beam_width=args.beam, granularity=args.granularity
    )
    for record in queries:
        candidates, _ = index.search(record.memory, config)
        estimate = estimate_position(candidates, not args.no_rerank)
        print(f"# query {record.pano_id}")
        print(f"estimate\t{estimate.position.x!r}\t{estimate.position.y!r}")
        print(f"contributors\t{','.join(estimate.contributors)}")
        print(f"total_mass\t{estimate.total_mass!r}")
    return 0


def _parse_index_configs(specs) -> list[tuple[int, int, int, object]]:
    configs = []
    for spec in specs:
        parts = spec.split(",")
        if len(parts) != 4:
            raise _UsageError(f"bad index config {spec!r}; expected N,M,BEAM,MODE")
        try:
            n, m, beam = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise _UsageError(f"bad index config {spec!r}: {exc}") from exc
        if parts[3] not in ("sum", "pinv"):
            raise _UsageError(f"bad index config {spec!r}: unknown mode {parts[3]!r}")
        configs.append((n, m, beam, parse_mode(parts[3])))
    return configs


def _cmd_evaluate(args) -> int:
    mode = parse_mode("pinv")
    database = read_features(args.features, args.meta, mode)
    query_records = read_features(args.query_features, args.query_meta, mode)
    queries = [(r.views, r.location) for r in query_records]
    if any(v is None for v, _ in queries):
        raise InvalidConfig("query records must carry four views")
    reports = run_experiment(
        database,
        queries,
        _parse_index_configs(args.index_configs),
        top_ks=args.top_ks,
        rerank=not args.no_rerank,
        query_mode=args.query_mode,
        im2pan_view=args.im2pan_view,
        radius=args.radius,
    )
    write_report_csv(reports, args.report)
    print(format_report_table(reports))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems; remap to the documented code
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: Usage: {exc}", file=sys.stderr)
        return 1
    except InvalidConfig as exc:
        print(f"error: InvalidConfig: {exc}", file=sys.stderr)
        return 1
    except PanolocError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: Internal: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
