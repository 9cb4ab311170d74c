"""Pipeline configuration: one JSON file plus command-line overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .scoring import ScoreParams


@dataclass(frozen=True)
class PipelineConfig:
    voxel: float = 0.005
    table_margin: float = 0.02
    r_d: float = 0.01
    r_group: float = 0.01
    r_vote: float = 0.01
    d_theta: float = 2
    vote_passes: int = 1
    n_theta: int = 60
    alpha: float = 0.3
    c_theta: float = 0.5
    clusterer: str = "binary"       # or "distance"
    baseline_min_pts: int = 5
    score_source: str = "geometric"  # "geometric" | "constant" | "file" (detect only)
    s_f_constant: float = 0.5
    height_frame: str = "camera"     # "camera" | "robot"
    calibration: Optional[str] = None
    profile: str = "ainstec"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        for name in ("voxel", "r_d", "r_group", "r_vote"):
            if getattr(self, name) < 0 or (name != "voxel" and getattr(self, name) == 0):
                raise ValueError(f"{name} must be positive")
        if self.clusterer not in ("binary", "distance"):
            raise ValueError(f"unknown clusterer {self.clusterer!r}")
        if self.score_source not in ("geometric", "constant", "file"):
            raise ValueError(f"unknown score source {self.score_source!r}")
        if self.height_frame not in ("camera", "robot"):
            raise ValueError(f"unknown height frame {self.height_frame!r}")
        if self.vote_passes < 1 or self.threads < 1:
            raise ValueError("vote_passes and threads must be at least 1")
        self.score_params  # validates alpha / n_theta

    @property
    def score_params(self) -> ScoreParams:
        return ScoreParams(alpha=self.alpha, n_theta=self.n_theta, c_theta=self.c_theta)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path=None, **overrides) -> "PipelineConfig":
        """Read ``path`` (if given), then apply non-``None`` overrides."""
        cfg = cls() if path is None else cls.from_dict(json.loads(Path(path).read_text()))
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(cfg, **overrides) if overrides else cfg
