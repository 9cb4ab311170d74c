"""Instance-segmentation AP and grasp-episode metrics.

Predictions and ground truths are point-index sets over one cloud. A
prediction is ``(members, score)``.
"""

from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from .cloud import PointCloud
from .grasp import EpisodeLog

MAP_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))


def point_iou(pred, gt) -> float:
    """Point-set IoU; two empty sets give 0."""
    a, b = set(np.asarray(pred).tolist()), set(np.asarray(gt).tolist())
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def _iou_matrix(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], n_points: int):
    if not preds or not gts:
        return np.zeros((len(preds), len(gts)))
    p = np.zeros((len(preds), n_points), dtype=np.float64)
    g = np.zeros((len(gts), n_points), dtype=np.float64)
    for k, m in enumerate(preds):
        p[k, m] = 1.0
    for k, m in enumerate(gts):
        g[k, m] = 1.0
    inter = p @ g.T
    union = p.sum(1)[:, None] + g.sum(1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def _canonical(scored_preds):
    preds = [(np.unique(np.asarray(m, dtype=np.int64)), float(s)) for m, s in scored_preds]
    # score-descending; ties broken by point content so input order never matters
    preds.sort(key=lambda ps: (-ps[1], tuple(ps[0].tolist())))
    return preds


def match_predictions(scored_preds, gts, iou_threshold: float):
    """Greedy matching in descending score order.

    Returns ``(preds, matched_gt, ious)`` where ``preds`` is the canonical
    ordering and ``matched_gt[k]`` is the gt index or -1.
    """
    preds = _canonical(scored_preds)
    gts = [np.unique(np.asarray(g, dtype=np.int64)) for g in gts]
    top = 0
    for m in [p for p, _ in preds] + gts:
        if len(m):
            top = max(top, int(m.max()) + 1)
    iou = _iou_matrix([p for p, _ in preds], gts, top)
    taken = np.zeros(len(gts), dtype=bool)
    matched = np.full(len(preds), -1, dtype=np.int64)
    for k in range(len(preds)):
        if not len(gts):
            break
        cand = np.where(taken | (iou[k] < iou_threshold), -1.0, iou[k])
        best = int(np.argmax(cand))
        if cand[best] >= 0 and iou[k, best] >= iou_threshold:
            matched[k] = best
            taken[best] = True
    return preds, matched, iou


def average_precision(scored_preds, gts, iou_threshold: float) -> float:
    """All-points interpolated area under the precision-recall curve.

    The curve is sampled after each block of equal scores. No gts: 1.0 if
    there are no predictions either, else 0.0.
    """
    if len(gts) == 0:
        return 1.0 if len(scored_preds) == 0 else 0.0
    if len(scored_preds) == 0:
        return 0.0
    preds, matched, _ = match_predictions(scored_preds, gts, iou_threshold)
    scores = np.array([s for _, s in preds])
    tp = np.cumsum(matched >= 0)
    n = np.arange(1, len(preds) + 1)
    last = np.append(scores[1:] != scores[:-1], True)
    recall = tp[last] / len(gts)
    precision = tp[last] / n[last]
    # precision envelope from the right, then sum over recall steps
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recall]))
    return float(np.sum(steps * envelope))


def map_suite(scored_preds, gts) -> dict:
    per = {f"{t:.2f}": average_precision(scored_preds, gts, t) for t in MAP_THRESHOLDS}
    return {
        "mAP": float(np.mean(list(per.values()))),
        "AP50": per["0.50"],
        "AP25": average_precision(scored_preds, gts, 0.25),
        "per_threshold": per,
    }


def scored_predictions(instances, scored) -> list[tuple[np.ndarray, float]]:
    """AP inputs from a clustering result; gated (-1) instances are left out."""
    members = instances.instances
    return [(members[s.instance_id], s.sc) for s in scored if s.sc >= 0]


def gt_instances(cloud: PointCloud) -> list[np.ndarray]:
    return list(cloud.gt_objects().values())


def episode_metrics(log: EpisodeLog, cloud: PointCloud) -> dict:
    """Recognition and grasp rates of one episode against the cloud's labels.

    An object is recognised when any gated-in detection of any iteration
    covers it with IoU >= 0.5, and grasped when a grasped instance does.
    """
    objects = gt_instances(cloud)
    if not objects:
        raise ValueError("cloud has no ground-truth objects")
    detections: list[Iterable[int]] = []
    grasped: list[Iterable[int]] = []
    for r in log.records:
        detections.extend(r.get("detections", []))
        if "members" in r:
            grasped.append(r["members"])

    def covered(groups) -> int:
        if not groups:
            return 0
        iou = _iou_matrix([np.asarray(g, dtype=np.int64) for g in groups], objects, len(cloud))
        return int(np.sum(iou.max(axis=0) >= 0.5))

    n = len(objects)
    return {
        "recognition_rate": covered(detections) / n,
        "grasp_rate": covered(grasped) / n,
        "objects": n,
        "grasps": len(grasped),
    }


def format_table(rows: dict[str, dict]) -> str:
    """Plain-text table of mAP / AP50 / AP25 (percent), one row per method."""
    lines = [f"{'Method':<24}|{'mAP':>7}{'AP50':>7}{'AP25':>7}", "-" * 45]
    for name, m in rows.items():
        lines.append(
            f"{name:<24}|{100 * m['mAP']:>7.1f}{100 * m['AP50']:>7.1f}{100 * m['AP25']:>7.1f}"
        )
    return "\n".join(lines)


def report_json(metrics: dict) -> str:
    return json.dumps(metrics, indent=2, sort_keys=True)
