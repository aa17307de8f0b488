import numpy as np
import pytest

from panoloc import (
    PINV,
    SUM,
    Candidate,
    CandidateSet,
    GeoPoint,
    MemoryVector,
    SynthConfig,
    VectorMode,
    median,
    positioning_error,
    recall_at_n,
    run_experiment,
    synth_dataset,
)
from panoloc.evalbench import render_report_csv, report_rows
from panoloc.errors import EmptyInput, InvalidConfig, LengthMismatch


def cand_at(pano_id, x, y, sim=0.9):
    return Candidate(
        pano_id, GeoPoint(x, y), sim, MemoryVector(np.ones(8), VectorMode.PINV, 1)
    )


class TestPositioningError:
    def test_zero(self):
        assert positioning_error(GeoPoint(0, 0), GeoPoint(0, 0)) == 0.0

    def test_three_four_five(self):
        assert positioning_error(GeoPoint(3, 4), GeoPoint(0, 0)) == 5.0

    def test_offset_triangle(self):
        assert positioning_error(GeoPoint(1.5, 2.5), GeoPoint(4.5, 6.5)) == 5.0


class TestMedian:
    def test_singleton(self):
        assert median([7]) == 7

    def test_odd(self):
        assert median([3, 1, 2]) == 2

    def test_even_lower_median(self):
        assert median([1, 2, 3, 4]) == 2

    def test_empty(self):
        with pytest.raises(EmptyInput):
            median([])


class TestRecallAtN:
    def test_perfect_top_one(self):
        results = [CandidateSet((cand_at("a", 1.0, 2.0),))]
        assert recall_at_n(results, [GeoPoint(1.0, 2.0)], 1) == 1.0

    def test_26_meters_misses_at_25(self):
        results = [CandidateSet((cand_at("a", 26.0, 0.0),))]
        assert recall_at_n(results, [GeoPoint(0, 0)], 1, radius=25.0) == 0.0

    def test_exactly_25_meters_counts(self):
        results = [CandidateSet((cand_at("a", 15.0, 20.0),))]
        assert recall_at_n(results, [GeoPoint(0, 0)], 1, radius=25.0) == 1.0

    def test_mixed_fixture(self):
        results = [
            CandidateSet((cand_at("a", 0, 0),)),        # hit
            CandidateSet((cand_at("b", 100, 0),)),      # miss
            CandidateSet((cand_at("c", 10, 10),)),      # hit
            CandidateSet((cand_at("d", 0, 40),)),       # miss
        ]
        truths = [GeoPoint(0, 0)] * 4
        assert recall_at_n(results, truths, 1) == 0.5

    def test_deeper_candidate_counts_at_higher_n(self):
        results = [CandidateSet((cand_at("far", 100, 0, 0.9), cand_at("near", 1, 0, 0.8)))]
        truths = [GeoPoint(0, 0)]
        assert recall_at_n(results, truths, 1) == 0.0
        assert recall_at_n(results, truths, 2) == 1.0

    def test_monotone_in_n_and_radius(self, rng):
        results = []
        truths = []
        for q in range(30):
            entries = tuple(
                cand_at(f"c{q}{i}", rng.uniform(0, 60), rng.uniform(0, 60), 1 - i * 0.01)
                for i in range(10)
            )
            results.append(CandidateSet(entries))
            truths.append(GeoPoint(rng.uniform(0, 60), rng.uniform(0, 60)))
        values = [recall_at_n(results, truths, n) for n in (1, 3, 5, 10)]
        assert values == sorted(values)
        radii = [recall_at_n(results, truths, 5, radius=r) for r in (5, 15, 25, 60)]
        assert radii == sorted(radii)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            recall_at_n([CandidateSet(())], [], 1)


class TestSynthDataset:
    def test_single_pano(self):
        db, queries = synth_dataset(
            SynthConfig(pano_count=1, dim=8, query_count=1, seed=3)
        )
        assert len(db) == 1 and len(queries) == 1
        assert set(db[0].views) == {"N", "E", "S", "W"}
        assert queries[0][1] == db[0].location

    def test_zero_noise_queries_equal_pano_views(self):
        db, queries = synth_dataset(
            SynthConfig(pano_count=9, dim=8, query_count=5, seed=3)
        )
        by_loc = {(r.location.x, r.location.y): r for r in db}
        for views, truth in queries:
            record = by_loc[(truth.x, truth.y)]
            assert views == record.views

    def test_seed_determinism_bit_identical(self):
        cfg = SynthConfig(
            pano_count=25, dim=16, view_noise_sigma=0.05, query_noise_sigma=0.1,
            query_count=10, seed=99,
        )
        db1, q1 = synth_dataset(cfg)
        db2, q2 = synth_dataset(cfg)
        assert db1 == db2
        assert q1 == q2

    def test_grid_spacing(self):
        db, _ = synth_dataset(SynthConfig(pano_count=9, dim=8, street_spacing=5.0, query_count=0))
        xs = sorted({r.location.x for r in db})
        assert xs == [0.0, 5.0, 10.0]

    def test_offset_queries_move_off_grid(self):
        cfg = SynthConfig(
            pano_count=25, dim=8, query_count=10, query_offset=True, seed=5
        )
        _, queries = synth_dataset(cfg)
        spacing = 5.0
        for _, truth in queries:
            assert truth.x % spacing != 0.0 or truth.y % spacing != 0.0

    def test_similarity_decays_with_distance(self):
        from panoloc import cosine_similarity

        db, _ = synth_dataset(
            SynthConfig(pano_count=400, dim=16, anchor_count=32, query_count=0, seed=1)
        )
        origin = db[0]
        near = [r for r in db if origin.location.distance_to(r.location) <= 10]
        far = [r for r in db if origin.location.distance_to(r.location) >= 80]
        near_sim = np.mean(
            [cosine_similarity(origin.memory.values, r.memory.values) for r in near]
        )
        far_sim = np.mean(
            [cosine_similarity(origin.memory.values, r.memory.values) for r in far]
        )
        assert near_sim > far_sim + 0.1

    def test_invalid_configs(self):
        with pytest.raises(InvalidConfig):
            synth_dataset(SynthConfig(pano_count=0, dim=8))
        with pytest.raises(InvalidConfig):
            synth_dataset(SynthConfig(pano_count=1, dim=4))
        with pytest.raises(InvalidConfig):
            synth_dataset(SynthConfig(pano_count=1, dim=8, view_noise_sigma=-1))


@pytest.fixture(scope="module")
def small_bench():
    cfg = SynthConfig(
        pano_count=400,
        dim=16,
        anchor_count=48,
        view_noise_sigma=0.08,
        query_noise_sigma=0.25,
        query_count=60,
        seed=42,
    )
    return synth_dataset(cfg)


class TestRunExperiment:
    def test_zero_noise_gl0_perfect(self):
        db, queries = synth_dataset(
            SynthConfig(pano_count=64, dim=16, query_count=30, seed=11)
        )
        reports = run_experiment(db, queries, [(4, 0, 5, PINV)], top_ks=[1], rerank=False)
        assert len(reports) == 1
        assert reports[0].recall_at[1] == 1.0
        assert reports[0].median_error_baseline == 0.0
        assert reports[0].median_error_reranked is None

    def test_gl0_recall_matches_flat_scan_oracle(self, small_bench):
        from panoloc import build_index

        db, queries = small_bench
        reports = run_experiment(db, queries, [(4, 0, 5, PINV)], top_ks=[5])
        index = build_index(db, 4, 0, PINV)
        from panoloc import aggregate_panorama

        results = []
        truths = []
        for views, truth in queries:
            cands, _ = index.full_scan(aggregate_panorama(views, PINV), 20)
            results.append(cands)
            truths.append(truth)
        for n in (1, 5, 10, 15, 20):
            assert reports[0].recall_at[n] == recall_at_n(results, truths, n)

    def test_recall_non_decreasing_in_n(self, small_bench):
        db, queries = small_bench
        (report,) = run_experiment(db, queries, [(4, 1, 5, PINV)], top_ks=[5])
        values = [report.recall_at[n] for n in (1, 5, 10, 15, 20)]
        assert values == sorted(values)

    def test_im2pan_recall_not_above_pan2pan(self, small_bench):
        db, queries = small_bench
        (pan,) = run_experiment(db, queries, [(4, 0, 5, PINV)], top_ks=[5], rerank=False)
        (im,) = run_experiment(
            db, queries, [(4, 0, 5, PINV)], top_ks=[5], rerank=False,
            query_mode="im2pan",
        )
        assert im.recall_at[5] <= pan.recall_at[5]

    def test_mean_evaluations_shrink_with_granularity(self, small_bench):
        db, queries = small_bench
        reports = run_experiment(
            db, queries, [(4, 0, 5, PINV), (4, 1, 5, PINV)], top_ks=[5]
        )
        assert (
            reports[1].mean_similarity_evaluations
            < reports[0].mean_similarity_evaluations
        )

    def test_sum_mode_sweeps_too(self, small_bench):
        db, queries = small_bench
        (report,) = run_experiment(db, queries, [(4, 1, 5, SUM)], top_ks=[3])
        assert report.mode == "sum"
        assert 0.0 <= report.recall_at[5] <= 1.0

    def test_determinism_modulo_wall_time(self, small_bench):
        db, queries = small_bench
        configs = [(4, 0, 5, PINV), (4, 1, 3, PINV)]
        a = run_experiment(db, queries, configs, top_ks=[3, 5])
        b = run_experiment(db, queries, configs, top_ks=[3, 5])
        rows_a = [row[:-1] for row in report_rows(a)]  # drop wall_ms column
        rows_b = [row[:-1] for row in report_rows(b)]
        assert rows_a == rows_b

    def test_report_csv_schema(self, small_bench):
        db, queries = small_bench
        reports = run_experiment(db, queries, [(4, 1, 5, PINV)], top_ks=[5])
        text = render_report_csv(reports)
        header = text.splitlines()[0].split(",")
        assert header == [
            "N", "M", "beam", "top_k",
            "recall@1", "recall@5", "recall@10", "recall@15", "recall@20",
            "median_error_baseline", "median_error_reranked", "sim_evals", "wall_ms",
        ]
        assert len(text.splitlines()) == 2

    def test_unknown_query_mode(self, small_bench):
        db, queries = small_bench
        with pytest.raises(InvalidConfig):
            run_experiment(db, queries, [(4, 0, 5, PINV)], top_ks=[5], query_mode="x")
