"""Point-cloud data model, voxel downsampling and exact radius queries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

BACKGROUND = -1


def _frozen(arr, dtype, width=None, name=""):
    if arr is None:
        return None
    out = np.array(arr, dtype=dtype, copy=True)
    if width is None:
        out = out.reshape(-1)
    else:
        if out.size == 0:
            out = out.reshape(0, width)
        if out.ndim != 2 or out.shape[1] != width:
            raise ValueError(f"{name} must have shape (N, {width}), got {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable set of 3-D points with optional per-point attributes.

    ``gt_instance`` uses -1 for background; ``gt_semantic`` holds integer
    class labels. All optional arrays share the length of ``positions``.
    """

    positions: np.ndarray
    colors: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None
    gt_instance: Optional[np.ndarray] = None
    gt_semantic: Optional[np.ndarray] = None

    def __post_init__(self):
        pos = _frozen(self.positions, np.float64, 3, "positions")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions contain non-finite values")
        object.__setattr__(self, "positions", pos)
        n = len(pos)
        for name, dtype, width in (
            ("colors", np.float64, 3),
            ("normals", np.float64, 3),
            ("gt_instance", np.int64, None),
            ("gt_semantic", np.int64, None),
        ):
            arr = _frozen(getattr(self, name), dtype, width, name)
            if arr is not None and len(arr) != n:
                raise ValueError(f"{name} has length {len(arr)}, positions has {n}")
            object.__setattr__(self, name, arr)
        if self.colors is not None and (
            np.any(self.colors < 0) or np.any(self.colors > 1)
        ):
            raise ValueError("colors must lie in [0, 1]")
        if self.normals is not None and n:
            norms = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("normals must have unit length")
        if self.gt_instance is not None and np.any(self.gt_instance < BACKGROUND):
            raise ValueError("gt_instance labels must be -1 or nonnegative")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def has_gt(self) -> bool:
        return self.gt_instance is not None

    def subset(self, idx) -> "PointCloud":
        """Return the points at ``idx`` (indices or boolean mask), in that order."""
        idx = np.asarray(idx)

        def take(a):
            return None if a is None else a[idx]

        return PointCloud(
            positions=self.positions[idx],
            colors=take(self.colors),
            normals=take(self.normals),
            gt_instance=take(self.gt_instance),
            gt_semantic=take(self.gt_semantic),
        )

    def gt_objects(self) -> dict[int, np.ndarray]:
        """Map each ground-truth object label to its sorted point indices."""
        if self.gt_instance is None:
            raise ValueError("cloud has no ground-truth instance labels")
        labels = self.gt_instance
        return {
            int(k): np.flatnonzero(labels == k)
            for k in np.unique(labels[labels >= 0])
        }


def pairwise_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance between matching rows, ``sqrt(sum((a - b)**2))``."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return np.sqrt(np.sum(d * d, axis=-1))


@dataclass(frozen=True, eq=False)
class SpatialIndex:
    """Exact radius-neighbour index over a fixed set of positions.

    The kd-tree only proposes candidates; every returned neighbour is
    re-checked with :func:`pairwise_distance` so results never depend on
    tree rounding.
    """

    positions: np.ndarray
    workers: int = 1
    _tree: cKDTree = field(init=False, repr=False)

    def __post_init__(self):
        pos = _frozen(self.positions, np.float64, 3, "positions")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "_tree", cKDTree(pos) if len(pos) else None)

    @classmethod
    def from_cloud(cls, cloud: PointCloud, workers: int = 1) -> "SpatialIndex":
        return cls(cloud.positions, workers=workers)

    def __len__(self) -> int:
        return len(self.positions)

    def _slack(self, r: float) -> float:
        return r * (1.0 + 1e-9) + 1e-12

    def radius_neighbors(self, i: int, r: float) -> np.ndarray:
        """Sorted ids ``j != i`` with ``|p_i - p_j| <= r``."""
        n = len(self.positions)
        if not 0 <= i < n:
            raise IndexError(f"point id {i} out of range for {n} points")
        if r <= 0:
            raise ValueError("radius must be positive")
        cand = np.asarray(
            self._tree.query_ball_point(self.positions[i], self._slack(r)),
            dtype=np.int64,
        )
        cand = cand[cand != i]
        d = pairwise_distance(self.positions[cand], self.positions[i])
        return np.sort(cand[d <= r])

    def count_neighbors(self, r: float) -> np.ndarray:
        """Neighbour count (excluding self) within ``r`` for every point."""
        if len(self.positions) == 0:
            return np.zeros(0, dtype=np.int64)
        i, j = self.pairs(r)
        counts = np.bincount(i, minlength=len(self.positions))
        counts += np.bincount(j, minlength=len(self.positions))
        return counts.astype(np.int64)

    def pairs(self, r: float) -> tuple[np.ndarray, np.ndarray]:
        """All index pairs ``i < j`` within distance ``r``, lexicographically sorted."""
        if len(self.positions) < 2:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        p = self._tree.query_pairs(self._slack(r), output_type="ndarray")
        if len(p) == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        d = pairwise_distance(self.positions[p[:, 0]], self.positions[p[:, 1]])
        p = p[d <= r]
        order = np.lexsort((p[:, 1], p[:, 0]))
        p = p[order]
        return p[:, 0].astype(np.int64), p[:, 1].astype(np.int64)

    def query_points(self, points: np.ndarray, r: float) -> list[np.ndarray]:
        """For each query point, sorted ids of indexed points within ``r``."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if self._tree is None:
            return [np.zeros(0, dtype=np.int64) for _ in range(len(points))]
        cand = self._tree.query_ball_point(
            points, self._slack(r), workers=self.workers
        )
        out = []
        for q, c in zip(points, cand):
            c = np.asarray(c, dtype=np.int64)
            d = pairwise_distance(self.positions[c], q)
            out.append(np.sort(c[d <= r]))
        return out


def radius_neighbors(index: SpatialIndex, i: int, r: float) -> np.ndarray:
    return index.radius_neighbors(i, r)


def _majority(cell: np.ndarray, labels: np.ndarray, n_cells: int) -> np.ndarray:
    # most frequent label per cell; ties go to the smaller label
    pairs, counts = np.unique(
        np.stack([cell, labels], axis=1), axis=0, return_counts=True
    )
    order = np.lexsort((pairs[:, 1], -counts, pairs[:, 0]))
    pairs = pairs[order]
    first = np.ones(len(pairs), dtype=bool)
    first[1:] = pairs[1:, 0] != pairs[:-1, 0]
    out = np.empty(n_cells, dtype=np.int64)
    out[pairs[first, 0]] = pairs[first, 1]
    return out


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """Replace the points of every occupied voxel by their centroid.

    Cells are ``floor(coord / voxel)`` per axis. Colours and normals are
    averaged (normals renormalised), labels take the majority vote with
    ties resolved to the smaller label. Output cells are in lexicographic
    cell order.
    """
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.positions / voxel).astype(np.int64)
    _, inverse, counts = np.unique(
        keys, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    m = len(counts)

    def mean(values):
        out = np.zeros((m, values.shape[1]))
        np.add.at(out, inverse, values)
        return out / counts[:, None]

    normals = None
    if cloud.normals is not None:
        summed = np.zeros((m, 3))
        np.add.at(summed, inverse, cloud.normals)
        norm = np.linalg.norm(summed, axis=1)
        # opposing normals can cancel; fall back to the first member's normal
        first = np.full(m, len(cloud), dtype=np.int64)
        np.minimum.at(first, inverse, np.arange(len(cloud)))
        bad = norm < 1e-12
        summed[bad] = cloud.normals[first[bad]]
        norm[bad] = 1.0
        normals = summed / norm[:, None]

    return PointCloud(
        positions=mean(cloud.positions),
        colors=None if cloud.colors is None else np.clip(mean(cloud.colors), 0, 1),
        normals=normals,
        gt_instance=None
        if cloud.gt_instance is None
        else _majority(inverse, cloud.gt_instance, m),
        gt_semantic=None
        if cloud.gt_semantic is None
        else _majority(inverse, cloud.gt_semantic, m),
    )
