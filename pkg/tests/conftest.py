import numpy as np
import pytest

from panoloc import (
    PINV,
    FeatureVector,
    GeoPoint,
    PanoRecord,
    VIEW_KEYS,
    aggregate_panorama,
)


def fv(*values) -> FeatureVector:
    return FeatureVector(np.array(values, dtype=np.float64))


def make_record(pano_id, x, y, base, mode=PINV, view_jitter=None):
    """Record whose four views are `base` plus optional per-view jitter rows."""
    base = np.asarray(base, dtype=np.float64)
    views = {}
    for v, key in enumerate(VIEW_KEYS):
        vec = base if view_jitter is None else base + view_jitter[v]
        views[key] = FeatureVector(vec)
    return PanoRecord(
        pano_id=pano_id,
        location=GeoPoint(float(x), float(y)),
        memory=aggregate_panorama(views, mode),
        views=views,
    )


@pytest.fixture
def grid16():
    """4x4 panorama grid at 5 m pitch; vectors grouped per 2x2 spatial block.

    Each block shares a dominant axis so cluster aggregates separate
    cleanly, and each member adds its own secondary axis so all sixteen
    memory vectors are distinct.
    """
    dim = 20
    records = []
    for i in range(16):
        row, col = i // 4, i % 4
        block = (row // 2) * 2 + (col // 2)
        member = (row % 2) * 2 + (col % 2)
        base = np.zeros(dim)
        base[block] = 1.0
        base[4 + block * 4 + member] = 0.2
        records.append(make_record(f"p{i:02d}", col * 5.0, row * 5.0, base))
    return records


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
