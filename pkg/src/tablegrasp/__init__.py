"""Open-set tabletop object detection and grasp planning on point clouds."""

from .cloud import PointCloud, SpatialIndex, radius_neighbors, voxel_downsample
from .cluster import (
    DensityField,
    EmptyForegroundError,
    InstanceSet,
    cluster_distance_baseline,
    compute_density,
    geo_cluster,
    group_high_density,
    split_by_density,
    vote_low_density,
)
from .config import PipelineConfig
from .grasp import (
    CalibrationExtrinsics,
    EpisodeLog,
    GraspPlan,
    instance_centroid,
    run_grasp_loop,
    to_robot_frame,
    yaw_angle,
)
from .io import CloudFormatError, load_cloud, save_cloud
from .metrics import average_precision, episode_metrics, map_suite, point_iou
from .pipeline import Detection, detect
from .scoring import (
    ScoredInstance,
    ScoreParams,
    geometric_feature_score,
    mean_height,
    score_all,
    score_instance,
)
from .segment import binarize_scores, heuristic_scores, load_scores, predict_foreground
from .sim import PROFILES, DeviceProfile, SceneSpec, generate_scene, scenario_presets

__version__ = "0.1.0"

__all__ = [
    "CalibrationExtrinsics",
    "CloudFormatError",
    "DensityField",
    "Detection",
    "DeviceProfile",
    "EmptyForegroundError",
    "EpisodeLog",
    "GraspPlan",
    "InstanceSet",
    "PROFILES",
    "PipelineConfig",
    "PointCloud",
    "SceneSpec",
    "ScoreParams",
    "ScoredInstance",
    "SpatialIndex",
    "average_precision",
    "binarize_scores",
    "cluster_distance_baseline",
    "compute_density",
    "detect",
    "episode_metrics",
    "generate_scene",
    "geo_cluster",
    "geometric_feature_score",
    "group_high_density",
    "heuristic_scores",
    "instance_centroid",
    "load_cloud",
    "load_scores",
    "map_suite",
    "mean_height",
    "point_iou",
    "predict_foreground",
    "radius_neighbors",
    "run_grasp_loop",
    "save_cloud",
    "scenario_presets",
    "score_all",
    "score_instance",
    "split_by_density",
    "to_robot_frame",
    "vote_low_density",
    "voxel_downsample",
    "yaw_angle",
]
