"""Geometric clustering of foreground points in the original coordinate frame.

Foreground points are split by local density. Dense points are grouped
into radius-graph connected components; sparse points then join the
instance most common among their dense neighbours. A plain distance
clustering over all foreground points is kept as a comparison baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .cloud import PointCloud, SpatialIndex, pairwise_distance

UNASSIGNED = -1


class EmptyForegroundError(ValueError):
    """Raised when an operation needs at least one foreground point."""


@dataclass(frozen=True, eq=False)
class DensityField:
    ids: np.ndarray      # foreground point ids, ascending
    density: np.ndarray  # neighbour count among foreground points


@dataclass(frozen=True, eq=False)
class InstanceSet:
    """Disjoint instances over a subset (the foreground) of a cloud.

    ``labels`` has one entry per cloud point: the instance id, or -1 for
    points that are background or foreground-but-unassigned.
    """

    labels: np.ndarray
    foreground: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        fg = np.unique(np.asarray(self.foreground, dtype=np.int64))
        outside = np.ones(len(labels), dtype=bool)
        outside[fg] = False
        if np.any(labels[outside] != UNASSIGNED):
            raise ValueError("instance labels assigned to non-foreground points")
        if np.any(labels < UNASSIGNED):
            raise ValueError("instance ids must be >= -1")
        labels.setflags(write=False)
        fg.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "foreground", fg)

    @property
    def n_instances(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) and self.labels.max() >= 0 else 0

    @property
    def instances(self) -> list[np.ndarray]:
        """Sorted member ids of each instance, indexed by instance id."""
        n = self.n_instances
        if n == 0:
            return []
        ids = np.flatnonzero(self.labels >= 0)
        order = np.argsort(self.labels[ids], kind="stable")
        ids = ids[order]
        bounds = np.searchsorted(self.labels[ids], np.arange(n + 1))
        return [ids[bounds[k]:bounds[k + 1]] for k in range(n)]

    @property
    def unassigned(self) -> np.ndarray:
        return self.foreground[self.labels[self.foreground] == UNASSIGNED]

    def to_dict(self) -> dict:
        return {"assignments": self.labels.tolist(), "foreground": self.foreground.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "InstanceSet":
        labels = np.asarray(data["assignments"], dtype=np.int64)
        fg = data.get("foreground")
        if fg is None:
            fg = np.flatnonzero(labels >= 0)
        return cls(labels, fg)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "InstanceSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def canonical_labels(component: np.ndarray) -> np.ndarray:
    """Relabel components (-1 kept) by descending size, ties by smallest member id."""
    component = np.asarray(component, dtype=np.int64)
    out = np.full(len(component), UNASSIGNED, dtype=np.int64)
    ids = np.flatnonzero(component >= 0)
    if len(ids) == 0:
        return out
    uniq, inv, counts = np.unique(component[ids], return_inverse=True, return_counts=True)
    first = np.full(len(uniq), len(component), dtype=np.int64)
    np.minimum.at(first, inv, ids)
    order = np.lexsort((first, -counts))
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[order] = np.arange(len(uniq))
    out[ids] = rank[inv]
    return out


def _components(positions: np.ndarray, r: float, workers: int = 1) -> np.ndarray:
    n = len(positions)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    i, j = SpatialIndex(positions, workers=workers).pairs(r)
    graph = coo_matrix((np.ones(len(i), dtype=np.int8), (i, j)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    return comp.astype(np.int64)


def compute_density(cloud: PointCloud, mask, r_d: float, workers: int = 1) -> DensityField:
    """Number of other foreground points within ``r_d`` of each foreground point."""
    if r_d <= 0:
        raise ValueError("density radius must be positive")
    mask = np.asarray(mask)
    if len(mask) != len(cloud):
        raise ValueError("mask length does not match the cloud")
    ids = np.flatnonzero(mask == 1)
    if len(ids) == 0:
        raise EmptyForegroundError("no foreground points")
    density = SpatialIndex(cloud.positions[ids], workers=workers).count_neighbors(r_d)
    return DensityField(ids, density)


def split_by_density(field: DensityField, d_theta: float) -> tuple[np.ndarray, np.ndarray]:
    dense = field.density > d_theta
    return field.ids[dense], field.ids[~dense]


def group_high_density(
    cloud: PointCloud,
    h_set,
    r_group: float,
    foreground=None,
    workers: int = 1,
) -> InstanceSet:
    """Connected components of the radius graph over the dense points.

    ``foreground`` (defaults to ``h_set``) lists every foreground point so
    that the sparse ones are carried as unassigned.
    """
    if r_group <= 0:
        raise ValueError("grouping radius must be positive")
    h_set = np.unique(np.asarray(h_set, dtype=np.int64))
    fg = h_set if foreground is None else np.union1d(foreground, h_set)
    labels = np.full(len(cloud), UNASSIGNED, dtype=np.int64)
    if len(h_set):
        comp = np.full(len(cloud), UNASSIGNED, dtype=np.int64)
        comp[h_set] = _components(cloud.positions[h_set], r_group, workers)
        labels = canonical_labels(comp)
    return InstanceSet(labels, fg)


def vote_low_density(
    cloud: PointCloud,
    instances: InstanceSet,
    l_set,
    r_vote: float,
    passes: int = 1,
    workers: int = 1,
) -> InstanceSet:
    """Give each sparse point the majority instance of its assigned neighbours.

    Ties go to the instance owning the nearest neighbour (then the lower
    id). Points with no assigned neighbour within ``r_vote`` stay
    unassigned. Each pass votes against the assignment at the start of
    that pass, so results do not depend on visiting order.
    """
    labels = instances.labels.copy()
    pending = np.asarray(l_set, dtype=np.int64)
    pending = pending[labels[pending] == UNASSIGNED]
    for _ in range(passes):
        assigned = np.flatnonzero(labels >= 0)
        if len(pending) == 0 or len(assigned) == 0:
            break
        index = SpatialIndex(cloud.positions[assigned], workers=workers)
        hits = index.query_points(cloud.positions[pending], r_vote)
        new = labels.copy()
        for p, nb in zip(pending, hits):
            if len(nb) == 0:
                continue
            nb_ids = assigned[nb]
            nb_lab = labels[nb_ids]
            cand, counts = np.unique(nb_lab, return_counts=True)
            best = cand[counts == counts.max()]
            if len(best) > 1:
                dist = pairwise_distance(cloud.positions[nb_ids], cloud.positions[p])
                nearest = [dist[nb_lab == b].min() for b in best]
                best = best[[int(np.argmin(nearest))]]
            new[p] = best[0]
        changed = new[pending] != labels[pending]
        labels = new
        pending = pending[~changed]
        if not changed.any():
            break
    return InstanceSet(labels, instances.foreground)


def cluster_distance_baseline(
    cloud: PointCloud,
    mask,
    r_group: float,
    min_pts: int = 5,
    workers: int = 1,
) -> InstanceSet:
    """Radius-graph components over every foreground point, no density split.

    Components with fewer than ``min_pts`` points are left unassigned.
    """
    if r_group <= 0:
        raise ValueError("grouping radius must be positive")
    mask = np.asarray(mask)
    fg = np.flatnonzero(mask == 1)
    comp = np.full(len(cloud), UNASSIGNED, dtype=np.int64)
    if len(fg):
        c = _components(cloud.positions[fg], r_group, workers)
        sizes = np.bincount(c)
        c[sizes[c] < min_pts] = UNASSIGNED
        comp[fg] = c
    return InstanceSet(canonical_labels(comp), fg)


def geo_cluster(
    cloud: PointCloud,
    mask,
    r_d: float = 0.01,
    d_theta: float = 2,
    r_group: float = 0.01,
    r_vote: float = 0.01,
    vote_passes: int = 1,
    workers: int = 1,
) -> InstanceSet:
    """Density split, grouping of dense points, then voting for sparse ones."""
    field = compute_density(cloud, mask, r_d, workers=workers)
    h_set, l_set = split_by_density(field, d_theta)
    inst = group_high_density(cloud, h_set, r_group, foreground=field.ids, workers=workers)
    return vote_low_density(cloud, inst, l_set, r_vote, passes=vote_passes, workers=workers)
