"""Segment -> cluster -> score, shared by the detect command and the grasp loop."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cloud import PointCloud
from .cluster import InstanceSet, cluster_distance_baseline, geo_cluster
from .config import PipelineConfig
from .scoring import ScoredInstance, score_all
from .segment import heuristic_scores, segment


@dataclass(frozen=True, eq=False)
class Detection:
    mask: np.ndarray
    instances: InstanceSet
    scored: list[ScoredInstance]

    @property
    def valid(self) -> list[ScoredInstance]:
        """Scored instances that passed the point-count gate."""
        return [s for s in self.scored if s.sc >= 0]


def cluster(cloud: PointCloud, mask: np.ndarray, config: PipelineConfig) -> InstanceSet:
    if not np.any(mask == 1):
        return InstanceSet(np.full(len(cloud), -1), [])
    if config.clusterer == "distance":
        return cluster_distance_baseline(
            cloud, mask, config.r_group, config.baseline_min_pts, workers=config.threads
        )
    return geo_cluster(
        cloud,
        mask,
        r_d=config.r_d,
        d_theta=config.d_theta,
        r_group=config.r_group,
        r_vote=config.r_vote,
        vote_passes=config.vote_passes,
        workers=config.threads,
    )


def detect(
    cloud: PointCloud,
    config: PipelineConfig,
    scores: Optional[np.ndarray] = None,
    s_f_values: Optional[Sequence[float]] = None,
    height_cloud: Optional[PointCloud] = None,
    mask_limit: Optional[np.ndarray] = None,
) -> Detection:
    """Run segmentation, clustering and scoring on one cloud.

    ``scores`` overrides the table-plane heuristic. ``height_cloud`` (same
    points, other frame) is used for the height term. ``mask_limit``
    forces points to background where it is false.
    """
    if scores is None:
        scores = heuristic_scores(cloud, config.table_margin)
    mask = segment(scores)
    if mask_limit is not None:
        mask = mask & np.asarray(mask_limit, dtype=np.int64)
    instances = cluster(cloud, mask, config)

    if config.score_source == "file":
        source, values = "file", s_f_values
    elif config.score_source == "constant":
        source, values = "constant", config.s_f_constant
    else:
        source, values = "geometric", None
    hc = cloud if height_cloud is None else height_cloud
    scored = score_all(
        hc,
        instances,
        config.score_params,
        s_f_source=source,
        s_f_values=values,
        z_range=proposal_z_range(hc, instances, config.n_theta) if len(hc) else None,
        radius=config.r_d,
    )
    return Detection(mask, instances, scored)


def proposal_z_range(cloud: PointCloud, instances: InstanceSet, n_theta: int):
    """Lowest cloud point up to the highest point of any gate-passing instance.

    Stray points (left behind by earlier grasps, or edge artefacts) do not
    stretch the range; with no gate-passing instance the full cloud range
    is used.
    """
    z = cloud.positions[:, 2]
    tops = [z[m].max() for m in instances.instances if len(m) >= n_theta]
    z_lo = float(z.min())
    z_hi = float(max(tops)) if tops else float(z.max())
    return z_lo, z_hi
