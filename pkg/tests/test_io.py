import numpy as np
import pytest

from panoloc import (
    PINV,
    SUM,
    FeatureVector,
    GeoPoint,
    MemoryVector,
    PanoRecord,
    SynthConfig,
    VectorMode,
    read_features,
    synth_dataset,
    write_features,
)
from panoloc.io import (
    FEATURE_MAGIC,
    MetaRow,
    read_meta,
    read_vectors,
    write_meta,
    write_vectors,
)
from panoloc.errors import (
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
from conftest import make_record


def record_from_rows(pano_id, x, y, rows, mode=PINV):
    views = {key: FeatureVector(rows[v]) for v, key in enumerate("NESW")}
    from panoloc import aggregate_panorama

    return PanoRecord(pano_id, GeoPoint(x, y), aggregate_panorama(views, mode), views)


@pytest.fixture
def sample_records(rng):
    # the on-disk format stores float32, so exact round trips hold for
    # float32-representable view values; round them at generation time
    records = []
    for i in range(3):
        rows = rng.standard_normal((4, 8)) + rng.standard_normal(8)
        rows = np.asarray(np.asarray(rows, dtype=np.float32), dtype=np.float64)
        records.append(record_from_rows(f"p{i:03d}", i * 5.0, i * 2.0, rows))
    return records


class TestVectorFile:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        data = np.asarray(
            rng.standard_normal((7, 12)), dtype=np.float32
        ).astype(np.float64)
        path = tmp_path / "vecs.mvec"
        write_vectors(data, path)
        back = read_vectors(path)
        assert np.array_equal(back, data)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.mvec"
        write_vectors(np.zeros((0, 0)), path)
        back = read_vectors(path)
        assert back.shape[0] == 0
        assert path.stat().st_size == 15  # header only

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.mvec"
        path.write_bytes(b"XXXX" + bytes(16))
        with pytest.raises(BadMagic):
            read_vectors(path)

    def test_version_bump(self, rng, tmp_path):
        path = tmp_path / "vecs.mvec"
        write_vectors(rng.standard_normal((2, 4)), path)
        blob = bytearray(path.read_bytes())
        blob[4] += 1
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionMismatch):
            read_vectors(path)

    def test_unsupported_dtype(self, rng, tmp_path):
        path = tmp_path / "vecs.mvec"
        write_vectors(rng.standard_normal((2, 4)), path)
        blob = bytearray(path.read_bytes())
        blob[14] = 9  # dtype byte
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionMismatch):
            read_vectors(path)

    def test_truncated_payload(self, rng, tmp_path):
        path = tmp_path / "vecs.mvec"
        write_vectors(rng.standard_normal((2, 4)), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-4])
        with pytest.raises(CountMismatch):
            read_vectors(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            read_vectors(tmp_path / "absent.mvec")


class TestMetaFile:
    def test_round_trip(self, tmp_path):
        rows = [
            MetaRow("p0", 1.25, -3.5, "N"),
            MetaRow("p0", 1.25, -3.5, "E"),
            MetaRow("q1", 0.1234567890123, 9e5, "PANO"),
        ]
        path = tmp_path / "meta.csv"
        write_meta(rows, path)
        assert read_meta(path) == rows

    def test_bad_header(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text("id,x,y\np0,1,2\n")
        with pytest.raises(InvalidRow):
            read_meta(path)

    def test_unknown_view(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text("id,x,y,view\np0,1,2,Q\n")
        with pytest.raises(InvalidRow):
            read_meta(path)

    def test_unparsable_coordinate(self, tmp_path):
        path = tmp_path / "meta.csv"
        path.write_text("id,x,y,view\np0,abc,2,N\n")
        with pytest.raises(NonFiniteValue):
            read_meta(path)


class TestWriteReadFeatures:
    def test_four_view_round_trip_identical(self, sample_records, tmp_path):
        fpath, mpath = tmp_path / "db.mvec", tmp_path / "db.meta.csv"
        write_features(sample_records, fpath, mpath)
        back = read_features(fpath, mpath, PINV)
        assert back == sample_records

    def test_synth_round_trip_identical(self, tmp_path):
        db, _ = synth_dataset(
            SynthConfig(pano_count=12, dim=16, view_noise_sigma=0.05, query_count=0, seed=8)
        )
        fpath, mpath = tmp_path / "db.mvec", tmp_path / "db.meta.csv"
        write_features(db, fpath, mpath)
        assert read_features(fpath, mpath, PINV) == db

    def test_sum_mode_round_trip(self, sample_records, tmp_path):
        from panoloc.evalbench import rebuild_memories

        records = rebuild_memories(sample_records, SUM)
        fpath, mpath = tmp_path / "db.mvec", tmp_path / "db.meta.csv"
        write_features(records, fpath, mpath)
        assert read_features(fpath, mpath, SUM) == records

    def test_pano_row_round_trip(self, rng, tmp_path):
        values = np.asarray(rng.standard_normal(6), dtype=np.float32).astype(float)
        record = PanoRecord(
            "solo", GeoPoint(7.0, 8.0), MemoryVector(values, VectorMode.PINV, 1)
        )
        fpath, mpath = tmp_path / "db.mvec", tmp_path / "db.meta.csv"
        write_features([record], fpath, mpath)
        back = read_features(fpath, mpath, PINV)
        assert back == [record]
        assert back[0].views is None

    def test_mixed_dims_error_before_write(self, rng, tmp_path):
        records = [
            make_record("a", 0, 0, rng.standard_normal(8)),
            make_record("b", 1, 1, rng.standard_normal(12)),
        ]
        fpath, mpath = tmp_path / "db.mvec", tmp_path / "db.meta.csv"
        with pytest.raises(DimensionMismatch):
            write_features(records, fpath, mpath)
        assert not fpath.exists() and not mpath.exists()

    def test_count_mismatch_meta_vs_header(self, sample_records, tmp_path):
        fpath, mpath = tmp_path / "db.mvec", tmp_path / "db.meta.csv"
        write_features(sample_records, fpath, mpath)
        lines = mpath.read_text().splitlines()
        mpath.write_text("\n".join(lines + [lines[-1].replace("p002", "p003")]) + "\n")
        with pytest.raises(CountMismatch):
            read_features(fpath, mpath, PINV)

    def test_missing_view(self, sample_records, tmp_path):
        fpath, mpath = tmp_path / "db.mvec", tmp_path / "db.meta.csv"
        write_features(sample_records, fpath, mpath)
        lines = mpath.read_text().splitlines()
        # rename p002's W row to belong to a fresh pano: p002 now lacks W
        lines[-1] = lines[-1].replace("p002", "p999")
        mpath.write_text("\n".join(lines) + "\n")
        with pytest.raises(MissingView):
            read_features(fpath, mpath, PINV)

    def test_duplicate_row(self, sample_records, tmp_path):
        fpath, mpath = tmp_path / "db.mvec", tmp_path / "db.meta.csv"
        write_features(sample_records, fpath, mpath)
        lines = mpath.read_text().splitlines()
        lines[-1] = lines[-2]  # repeat (p002, S)
        mpath.write_text("\n".join(lines) + "\n")
        with pytest.raises(DuplicateRow):
            read_features(fpath, mpath, PINV)

    def test_pano_row_mixed_with_views(self, sample_records, tmp_path):
        fpath, mpath = tmp_path / "db.mvec", tmp_path / "db.meta.csv"
        write_features(sample_records, fpath, mpath)
        lines = mpath.read_text().splitlines()
        lines[-1] = lines[-1].rsplit(",", 1)[0] + ",PANO"
        mpath.write_text("\n".join(lines) + "\n")
        with pytest.raises(DuplicateRow):
            read_features(fpath, mpath, PINV)

    def test_conflicting_coordinates(self, sample_records, tmp_path):
        fpath, mpath = tmp_path / "db.mvec", tmp_path / "db.meta.csv"
        write_features(sample_records, fpath, mpath)
        lines = mpath.read_text().splitlines()
        parts = lines[-1].split(",")
        parts[1] = "999.0"
        lines[-1] = ",".join(parts)
        mpath.write_text("\n".join(lines) + "\n")
        with pytest.raises(InvalidRow):
            read_features(fpath, mpath, PINV)

    def test_first_appearance_order_preserved(self, sample_records, tmp_path):
        fpath, mpath = tmp_path / "db.mvec", tmp_path / "db.meta.csv"
        write_features(list(reversed(sample_records)), fpath, mpath)
        back = read_features(fpath, mpath, PINV)
        assert [r.pano_id for r in back] == ["p002", "p001", "p000"]
