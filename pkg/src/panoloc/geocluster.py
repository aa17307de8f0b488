"""Geographic agglomerative clustering with a hard size cap, stacked into a
multi-level hierarchy whose nodes carry aggregated memory vectors.

The merge rule: starting from singletons, repeatedly merge the pair of
clusters at minimum centroid-to-centroid Euclidean distance whose combined
direct-member count stays within the cap; exact distance ties are broken
by the lexicographically smallest pair of cluster ids (a cluster is keyed
by the smallest item id it contains). Inputs are sorted by id first, so
the result is independent of input order.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .aggregation import AggregationMode, aggregate_memories
from .core import GeoPoint, MemoryVector, PanoRecord
from .errors import DuplicateId, EmptyInput, InvalidConfig


@dataclass(frozen=True)
class Cluster:
    """One geographic neighborhood: its direct members and their centroid.

    ``size`` is the leaf-panorama count beneath the cluster. Fresh output
    of :func:`cluster_level` counts the items of that call; stacking via
    :func:`build_hierarchy` rewrites it with the true leaf count and fills
    in the aggregated memory vector.
    """

    cluster_id: str
    member_ids: tuple[str, ...]
    centroid: GeoPoint
    size: int
    memory: MemoryVector | None = None


@dataclass(frozen=True)
class Hierarchy:
    """Stacked clusterings; level 0 is the flat panorama list."""

    levels: tuple[tuple, ...]
    cluster_size: int
    granularity: int

    @property
    def panoramas(self) -> tuple[PanoRecord, ...]:
        return self.levels[0]


def centroid(points: Sequence[GeoPoint]) -> GeoPoint:
    """Componentwise arithmetic mean of the points."""
    if len(points) == 0:
        raise EmptyInput("centroid of zero points")
    xs = np.array([p.x for p in points], dtype=np.float64)
    ys = np.array([p.y for p in points], dtype=np.float64)
    return GeoPoint(float(xs.mean()), float(ys.mean()))


def cluster_level(
    items: Sequence[tuple[str, GeoPoint]],
    max_size: int,
    id_prefix: str = "c",
) -> list[Cluster]:
    """Group items into geographically compact clusters of at most max_size.

    Runs the capped agglomerative merge described in the module docstring.
    A lazy pair heap keeps it near O(k log k) on typical geographic data:
    every live cluster owns one candidate entry (its nearest admissible
    partner); entries that reference merged clusters are discarded or
    refreshed when they surface.

    Returns clusters sorted by their smallest member id, with ids assigned
    as ``{id_prefix}{index:06d}`` in that order.
    """
    if max_size < 2:
        raise InvalidConfig(f"max cluster size must be >= 2, got {max_size}")
    if len(items) == 0:
        raise EmptyInput("no items to cluster")
    items = sorted(items, key=lambda it: it[0])
    ids = [it[0] for it in items]
    if len(set(ids)) != len(ids):
        seen: set[str] = set()
        dup = next(i for i in ids if i in seen or seen.add(i))
        raise DuplicateId(f"duplicate item id {dup!r}")

    k = len(items)
    cap = 2 * k
    sum_x = np.zeros(cap)
    sum_y = np.zeros(cap)
    cen_x = np.zeros(cap)
    cen_y = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)
    alive = np.zeros(cap, dtype=bool)
    min_ids: list[str] = [""] * cap
    members: list[list[int]] = [[] for _ in range(cap)]
    for i, (item_id, point) in enumerate(items):
        sum_x[i] = cen_x[i] = point.x
        sum_y[i] = cen_y[i] = point.y
        count[i] = 1
        alive[i] = True
        min_ids[i] = item_id
        members[i] = [i]
    used = k

    heap: list[tuple] = []
    stamp = [0] * cap  # sequence number of each cluster's active entry

    def push_candidate(i: int) -> None:
        admissible = alive[:used].copy()
        admissible[i] = False
        admissible &= (count[:used] + count[i]) <= max_size
        if not admissible.any():
            return
        dx = cen_x[:used] - cen_x[i]
        dy = cen_y[:used] - cen_y[i]
        dist2 = dx * dx + dy * dy
        dist2[~admissible] = np.inf
        best = dist2.min()
        ties = np.flatnonzero(dist2 == best)
        own = min_ids[i]

        def pair_key(j: int) -> tuple[str, str]:
            other = min_ids[j]
            return (own, other) if own < other else (other, own)

        partner = min(ties, key=pair_key)
        stamp[i] += 1
        heapq.heappush(heap, (float(best), pair_key(partner), i, partner, stamp[i]))

    for i in range(k):
        push_candidate(i)

    while heap:
        _, _, i, j, seq = heapq.heappop(heap)
        if not alive[i] or seq != stamp[i]:
            continue  # owner merged away or entry superseded
        if not alive[j]:
            push_candidate(i)  # partner merged away; refresh owner
            continue
        alive[i] = alive[j] = False
        s = used
        used += 1
        sum_x[s] = sum_x[i] + sum_x[j]
        sum_y[s] = sum_y[i] + sum_y[j]
        count[s] = count[i] + count[j]
        cen_x[s] = sum_x[s] / count[s]
        cen_y[s] = sum_y[s] / count[s]
        min_ids[s] = min(min_ids[i], min_ids[j])
        members[s] = members[i] + members[j]
        alive[s] = True
        push_candidate(s)

    rows = []
    for s in range(used):
        if not alive[s]:
            continue
        mids = sorted(ids[t] for t in members[s])
        rows.append((mids[0], mids, GeoPoint(float(cen_x[s]), float(cen_y[s])), int(count[s])))
    rows.sort(key=lambda row: row[0])
    return [
        Cluster(
            cluster_id=f"{id_prefix}{n:06d}",
            member_ids=tuple(mids),
            centroid=cen,
            size=size,
        )
        for n, (_, mids, cen, size) in enumerate(rows)
    ]


def build_hierarchy(
    panos: Sequence[PanoRecord],
    cluster_size: int,
    granularity: int,
    mode: AggregationMode,
) -> Hierarchy:
    """Stack ``granularity`` clustering+aggregation passes over the panoramas.

    Level 0 is the id-sorted panorama list; each higher level clusters the
    centroids of the level below and aggregates the members' memory
    vectors into one per cluster. Granularity zero yields just the flat
    list. Leaf sets at every level partition the panoramas.
    """
    if len(panos) == 0:
        raise EmptyInput("no panoramas")
    if granularity < 0:
        raise InvalidConfig("granularity must be >= 0")
    records = sorted(panos, key=lambda r: r.pano_id)
    if len({r.pano_id for r in records}) != len(records):
        raise DuplicateId("panorama ids are not unique")

    levels: list[tuple] = [tuple(records)]
    child_memory = {r.pano_id: r.memory for r in records}
    child_leaves = {r.pano_id: 1 for r in records}
    items = [(r.pano_id, r.location) for r in records]
    for level in range(1, granularity + 1):
        raw = cluster_level(items, cluster_size, id_prefix=f"L{level}-")
        nodes = []
        for cluster in raw:
            memory = aggregate_memories(
                [child_memory[m] for m in cluster.member_ids], mode
            )
            leaves = sum(child_leaves[m] for m in cluster.member_ids)
            nodes.append(replace(cluster, memory=memory, size=leaves))
        levels.append(tuple(nodes))
        child_memory = {n.cluster_id: n.memory for n in nodes}
        child_leaves = {n.cluster_id: n.size for n in nodes}
        items = [(n.cluster_id, n.centroid) for n in nodes]
    return Hierarchy(
        levels=tuple(levels), cluster_size=cluster_size, granularity=granularity
    )
