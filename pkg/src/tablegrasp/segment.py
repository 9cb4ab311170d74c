"""Foreground/background segmentation from per-point class scores.

Class scores are an ``(N, M)`` row-stochastic matrix. At the public API
the background class is class 1 (one-based); internally that is column 0.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .cloud import PointCloud

BACKGROUND_COLUMN = 0
STOCHASTIC_TOL = 1e-5
LOAD_TOL = 1e-3


class ScoreFileError(ValueError):
    pass


def validate_scores(scores, tol: float = STOCHASTIC_TOL) -> np.ndarray:
    """Return ``scores`` as a float array after checking it is row-stochastic."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError(f"scores must be a 2-D matrix, got shape {s.shape}")
    if s.shape[1] < 2:
        raise ValueError("scores need at least two classes (background + one object class)")
    if np.any(~np.isfinite(s)) or np.any(s < 0) or np.any(s > 1):
        raise ValueError("scores must lie in [0, 1]")
    sums = s.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if len(bad):
        raise ValueError(f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
    return s


def binarize_scores(scores) -> np.ndarray:
    """Collapse class scores to ``[background, max over object classes]`` per point."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] < 2:
        raise ValueError("scores need at least two classes")
    fg = np.delete(s, BACKGROUND_COLUMN, axis=1).max(axis=1)
    return np.stack([s[:, BACKGROUND_COLUMN], fg], axis=1)


def predict_foreground(binary) -> np.ndarray:
    """Label 1 (foreground) unless the background score is strictly larger."""
    b = np.asarray(binary, dtype=np.float64)
    return (b[:, 0] <= b[:, 1]).astype(np.int64)


def fit_table_plane(positions: np.ndarray, table_margin: float, refine: int = 2):
    """Least-squares plane ``z = a*x + b*y + c`` through the lowest quartile of points.

    ``refine`` extra passes refit on all points within ``table_margin`` of the
    current plane, which removes the downward bias of the quartile under
    depth noise.
    """
    n = len(positions)
    if n < 3:
        raise ValueError("need at least 3 points to fit the table plane")
    k = max(3, int(np.ceil(n / 4)))
    low = np.argsort(positions[:, 2], kind="stable")[:k]
    coef = _lstsq_plane(positions[low])
    for _ in range(refine):
        inliers = np.abs(signed_height(positions, coef)) <= table_margin
        if inliers.sum() < 3:
            break
        coef = _lstsq_plane(positions[inliers])
    return coef


def _lstsq_plane(p: np.ndarray) -> np.ndarray:
    a = np.column_stack([p[:, 0], p[:, 1], np.ones(len(p))])
    coef, *_ = np.linalg.lstsq(a, p[:, 2], rcond=None)
    return coef


def signed_height(positions: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Perpendicular signed distance above the plane (positive = towards +z)."""
    a, b, c = coef
    resid = positions[:, 2] - (a * positions[:, 0] + b * positions[:, 1] + c)
    return resid / np.sqrt(a * a + b * b + 1.0)


def heuristic_scores(cloud: PointCloud, table_margin: float = 0.02) -> np.ndarray:
    """Two-class scores from a fitted table plane.

    Points at most ``table_margin`` above the plane (or anywhere below it)
    score ``[0.9, 0.1]``; everything else scores ``[0.1, 0.9]``.
    """
    if len(cloud) == 0:
        raise ValueError("cannot score an empty cloud")
    coef = fit_table_plane(cloud.positions, table_margin)
    table = signed_height(cloud.positions, coef) <= table_margin
    out = np.where(table[:, None], [0.9, 0.1], [0.1, 0.9])
    return out.astype(np.float64)


def load_scores(path, n_expected: int) -> np.ndarray:
    """Load an ``(N, M)`` score matrix from CSV or ``{"scores": [...]}`` JSON.

    Rows off by at most 1e-3 from summing to one are renormalised; larger
    deviations are rejected.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            rows = json.loads(text)["scores"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ScoreFileError(f"{path}: expected a JSON object with a 'scores' list") from exc
    else:
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        try:
            rows = [[float(v) for v in r] for r in rows]
        except ValueError as exc:
            raise ScoreFileError(f"{path}: {exc}") from exc
    if len(rows) != n_expected:
        raise ScoreFileError(f"{path}: {len(rows)} score rows, expected {n_expected}")
    if len({len(r) for r in rows}) > 1:
        raise ScoreFileError(f"{path}: rows have differing class counts")
    s = np.asarray(rows, dtype=np.float64).reshape(n_expected, -1)
    if s.shape[1] < 2:
        raise ScoreFileError(f"{path}: need at least two classes")
    if np.any(~np.isfinite(s)) or np.any(s < 0):
        raise ScoreFileError(f"{path}: scores must be finite and nonnegative")
    sums = s.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > LOAD_TOL)
    if len(bad):
        raise ScoreFileError(f"{path}: row {bad[0]} sums to {sums[bad[0]]:.6g}")
    s = s / sums[:, None]
    return validate_scores(s)


def segment(scores) -> np.ndarray:
    """Binary foreground mask straight from class scores."""
    return predict_foreground(binarize_scores(validate_scores(scores)))
