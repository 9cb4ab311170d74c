"""Grasp geometry and the detect-grasp-remove loop."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .cloud import PointCloud
from .config import PipelineConfig
from .pipeline import detect


class DegenerateInstanceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CalibrationExtrinsics:
    """Camera-to-robot rigid transform, applied to row vectors as ``p @ R + T``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise ValueError("calibration contains non-finite values")
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-6 or abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation must be orthonormal with determinant +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def load(cls, path) -> "CalibrationExtrinsics":
        data = json.loads(Path(path).read_text())
        return cls(data["rotation"], data["translation"])

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation + self.translation


@dataclass(frozen=True)
class GraspPlan:
    instance_id: int
    center_camera: tuple
    center_robot: tuple
    yaw: float
    confidence: float


def instance_centroid(cloud: PointCloud, instance) -> np.ndarray:
    instance = np.asarray(instance, dtype=np.int64)
    if len(instance) == 0:
        raise ValueError("instance has no points")
    return cloud.positions[instance].mean(axis=0)


def to_robot_frame(center, calib: CalibrationExtrinsics) -> np.ndarray:
    return calib.apply(center)


def yaw_extremes(cloud: PointCloud, instance) -> tuple[float, float, float, float]:
    """``(y_xmax, y_min, x_ymax, x_min)`` of an instance.

    The points attaining max-x and max-y are the lowest point ids among ties.
    """
    instance = np.sort(np.asarray(instance, dtype=np.int64))
    xy = cloud.positions[instance, :2]
    x, y = xy[:, 0], xy[:, 1]
    i_xmax = int(np.argmax(x))  # argmax returns the first (lowest id) maximum
    i_ymax = int(np.argmax(y))
    return float(y[i_xmax]), float(y.min()), float(x[i_ymax]), float(x.min())


def yaw_angle(cloud: PointCloud, instance) -> float:
    """Gripper yaw from the instance's planar extremes.

    ``atan((y_xmax - y_min) / (x_ymax - x_min))``, with ``pi/2`` when the
    denominator is below 1e-9.
    """
    instance = np.asarray(instance, dtype=np.int64)
    if len(instance) < 2:
        raise DegenerateInstanceError("yaw needs at least two points")
    xy = cloud.positions[instance, :2]
    if np.all(xy == xy[0]):
        raise DegenerateInstanceError("all instance points coincide in xy")
    y_xmax, y_min, x_ymax, x_min = yaw_extremes(cloud, instance)
    den = x_ymax - x_min
    if abs(den) < 1e-9:
        return math.pi / 2
    return math.atan((y_xmax - y_min) / den)


@dataclass
class EpisodeLog:
    records: list[dict] = field(default_factory=list)
    termination: str = ""

    @property
    def grasps(self) -> list[dict]:
        return [r for r in self.records if "termination" not in r]

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeLog":
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
        term = next((r["termination"] for r in records if "termination" in r), "")
        return cls(records, term)

    @classmethod
    def load(cls, path) -> "EpisodeLog":
        return cls.from_jsonl(Path(path).read_text())


def run_grasp_loop(
    cloud: PointCloud,
    config: PipelineConfig,
    calib: Optional[CalibrationExtrinsics] = None,
    scores: Optional[np.ndarray] = None,
    max_iterations: Optional[int] = None,
) -> EpisodeLog:
    """Repeatedly detect, grasp the most confident instance and delete it.

    The loop stops once the best confidence is below ``config.c_theta``.
    ``scores`` (one row per input point) replaces the table-plane
    heuristic; rows of grasped points are dropped with them. A point once
    classified as background stays background, so each grasp removes at
    least ``n_theta`` foreground points and the loop ends after at most
    ``ceil(initial_foreground / n_theta) + 1`` iterations.
    """
    calib = calib or CalibrationExtrinsics()
    working = np.arange(len(cloud))
    allowed = np.ones(len(cloud), dtype=np.int64)
    log = EpisodeLog()
    limit = max_iterations
    it = 0

    def stop(reason: str, **extra):
        log.termination = reason
        log.records.append({"iter": it, "termination": reason, **extra})
        return log

    while True:
        if len(working) == 0:
            return stop("below-threshold", max_sc=None, remaining_foreground=0, detections=[])
        sub = cloud.subset(working)
        height_cloud = None
        if config.height_frame == "robot":
            height_cloud = PointCloud(calib.apply(sub.positions))
        try:
            det = detect(
                sub,
                config,
                scores=None if scores is None else np.asarray(scores)[working],
                height_cloud=height_cloud,
                mask_limit=allowed[working],
            )
        except ValueError as exc:
            return stop(f"error: {exc}", max_sc=None, remaining_foreground=None, detections=[])
        allowed[working] = det.mask
        fg = int(det.mask.sum())
        if limit is None:
            limit = math.ceil(fg / config.n_theta) + 1
        members = det.instances.instances
        detections = [working[members[s.instance_id]].tolist() for s in det.valid]
        best = det.scored[0] if det.scored else None
        if best is None or best.sc < config.c_theta:
            return stop(
                "below-threshold",
                max_sc=None if best is None else best.sc,
                remaining_foreground=fg,
                detections=detections,
            )
        if it + 1 >= limit:
            return stop("iteration-limit", max_sc=best.sc, remaining_foreground=fg,
                        detections=detections)

        picked = members[best.instance_id]
        try:
            yaw = yaw_angle(sub, picked)
        except DegenerateInstanceError as exc:
            return stop(f"error: {exc}", max_sc=best.sc, remaining_foreground=fg,
                        detections=detections)
        c = instance_centroid(sub, picked)
        cr = to_robot_frame(c, calib)
        log.records.append({
            "iter": it,
            "instance_id": best.instance_id,
            "n_points": best.n_points,
            "s_f": best.s_f,
            "h_m": best.h_m,
            "sc": best.sc,
            "center_camera": c.tolist(),
            "center_robot": cr.tolist(),
            "yaw": yaw,
            "remaining_foreground": fg - len(picked),
            "members": working[picked].tolist(),
            "detections": detections,
        })
        keep = np.ones(len(working), dtype=bool)
        keep[picked] = False
        working = working[keep]
        it += 1


def grasp_plans(log: EpisodeLog) -> list[GraspPlan]:
    return [
        GraspPlan(r["instance_id"], tuple(r["center_camera"]), tuple(r["center_robot"]),
                  r["yaw"], r["sc"])
        for r in log.grasps
    ]
