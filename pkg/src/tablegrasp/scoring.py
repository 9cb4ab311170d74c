"""Per-instance confidence: point-count gate plus a feature/height blend."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cloud import PointCloud, SpatialIndex
from .cluster import InstanceSet

REJECTED = -1.0


@dataclass(frozen=True)
class ScoreParams:
    alpha: float = 0.3
    n_theta: int = 60
    c_theta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.n_theta < 1:
            raise ValueError("n_theta must be at least 1")


@dataclass(frozen=True)
class ScoredInstance:
    instance_id: int
    n_points: int
    s_f: float
    h_m: float
    sc: float

    def to_dict(self) -> dict:
        return asdict(self)


def mean_height(cloud: PointCloud, instance, scene_z_range: tuple[float, float]) -> float:
    """Mean member height mapped linearly onto ``[0, 1]`` over the scene z-range."""
    instance = np.asarray(instance, dtype=np.int64)
    if len(instance) == 0:
        raise ValueError("instance has no points")
    z_lo, z_hi = scene_z_range
    if not z_hi > z_lo:
        raise ValueError("scene z-range must satisfy z_hi > z_lo")
    z = cloud.positions[instance, 2].mean()
    return float(np.clip((z - z_lo) / (z_hi - z_lo), 0.0, 1.0))


def geometric_feature_score(cloud: PointCloud, instance, radius: float = 0.01) -> float:
    """Fraction of members whose in-instance neighbour count reaches the median.

    A training-free stand-in for a learned proposal score: compact blobs
    score high, proposals padded with scattered points score lower.
    Instances with fewer than 4 points score 0.
    """
    instance = np.asarray(instance, dtype=np.int64)
    if len(instance) < 4:
        return 0.0
    density = SpatialIndex(cloud.positions[instance]).count_neighbors(radius)
    return float(np.clip(np.mean(density >= np.median(density)), 0.0, 1.0))


def score_instance(n_points: int, s_f: float, h_m: float, params: ScoreParams) -> float:
    if n_points < params.n_theta:
        return REJECTED
    return params.alpha * s_f + (1.0 - params.alpha) * h_m


def scene_z_range(cloud: PointCloud) -> tuple[float, float]:
    z = cloud.positions[:, 2]
    return float(z.min()), float(z.max())


def score_all(
    cloud: PointCloud,
    instances: InstanceSet,
    params: ScoreParams,
    s_f_source: str = "geometric",
    s_f_values: Optional[Sequence[float] | float] = None,
    z_range: Optional[tuple[float, float]] = None,
    radius: float = 0.01,
) -> list[ScoredInstance]:
    """Score every instance and sort by confidence (desc), then instance id.

    ``s_f_source`` is ``"geometric"``, ``"file"`` (``s_f_values`` holds one
    value per instance, in instance-id order) or ``"constant"``
    (``s_f_values`` is a single number). A degenerate scene z-range gives
    ``h_m = 0`` for every instance.
    """
    members = instances.instances
    if s_f_source == "file":
        if s_f_values is None or len(s_f_values) != len(members):
            got = None if s_f_values is None else len(s_f_values)
            raise ValueError(f"expected {len(members)} s_f values, got {got}")
        s_f = [float(v) for v in s_f_values]
    elif s_f_source == "constant":
        s_f = [float(0.5 if s_f_values is None else s_f_values)] * len(members)
    elif s_f_source == "geometric":
        s_f = [geometric_feature_score(cloud, m, radius) for m in members]
    else:
        raise ValueError(f"unknown s_f source {s_f_source!r}")
    if any(not 0.0 <= v <= 1.0 for v in s_f):
        raise ValueError("s_f values must lie in [0, 1]")

    if members:
        z_lo, z_hi = z_range if z_range is not None else scene_z_range(cloud)
    out = []
    for k, m in enumerate(members):
        h_m = mean_height(cloud, m, (z_lo, z_hi)) if z_hi > z_lo else 0.0
        sc = score_instance(len(m), s_f[k], h_m, params)
        out.append(ScoredInstance(k, len(m), s_f[k], h_m, sc))
    out.sort(key=lambda s: (-s.sc, s.instance_id))
    return out


def load_s_f(path) -> list[float]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or not isinstance(data.get("s_f"), list):
        raise ValueError(f"{path}: expected a JSON object with an 's_f' list")
    return [float(v) for v in data["s_f"]]
