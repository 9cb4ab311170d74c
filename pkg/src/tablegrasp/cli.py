"""Command-line entry point.

Exit codes: 0 success, 2 bad arguments, 3 input-data error,
4 empty pipeline result (no grasps).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .cloud import PointCloud, voxel_downsample
from .cluster import InstanceSet
from .config import PipelineConfig
from .grasp import CalibrationExtrinsics, EpisodeLog, run_grasp_loop
from .io import FORMATS, CloudFormatError, load_cloud, save_cloud
from .metrics import episode_metrics, format_table, gt_instances, map_suite, scored_predictions
from .pipeline import detect
from .scoring import load_s_f
from .segment import ScoreFileError, load_scores
from .sim import PRESETS, PROFILES, SceneSpec, SceneSpecError, generate_scene, get_profile, scenario_presets

log = logging.getLogger("tablegrasp")

EXIT_OK, EXIT_ARGS, EXIT_DATA, EXIT_EMPTY = 0, 2, 3, 4


class InputError(Exception):
    """Bad or unreadable input data (exit code 3)."""


class UsageError(Exception):
    """Inconsistent arguments (exit code 2)."""


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config (JSON); flags override it")
    p.add_argument("--voxel", type=float)
    p.add_argument("--table-margin", type=float)
    p.add_argument("--r-d", type=float)
    p.add_argument("--r-group", type=float)
    p.add_argument("--r-vote", type=float)
    p.add_argument("--d-theta", type=float)
    p.add_argument("--vote-passes", type=int)
    p.add_argument("--n-theta", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--c-theta", type=float)
    p.add_argument("--clusterer", choices=("binary", "distance"))
    p.add_argument("--score-source", choices=("geometric", "constant", "file"))
    p.add_argument("--height-frame", choices=("camera", "robot"))
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)


_CONFIG_FLAGS = (
    "voxel", "table_margin", "r_d", "r_group", "r_vote", "d_theta", "vote_passes",
    "n_theta", "alpha", "c_theta", "clusterer", "score_source", "height_frame",
    "seed", "threads",
)


def _config(args) -> PipelineConfig:
    overrides = {k: getattr(args, k, None) for k in _CONFIG_FLAGS}
    if getattr(args, "calib", None):
        overrides["calibration"] = args.calib
    if args.config and not Path(args.config).is_file():
        raise InputError(f"config file not found: {args.config}")
    try:
        return PipelineConfig.load(args.config, **overrides)
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.config}: invalid JSON: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _load(path) -> PointCloud:
    if not Path(path).is_file():
        raise InputError(f"cloud file not found: {path}")
    return load_cloud(path)


def _prepare(cloud: PointCloud, cfg: PipelineConfig) -> PointCloud:
    return voxel_downsample(cloud, cfg.voxel) if cfg.voxel > 0 else cloud


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    profile = get_profile(args.profile)
    if args.spec:
        if not Path(args.spec).is_file():
            raise InputError(f"scene spec not found: {args.spec}")
        spec = SceneSpec.load(args.spec)
        if args.seed is not None:
            spec = SceneSpec(args.seed, spec.table, spec.objects)
    else:
        spec = scenario_presets(args.preset, args.seed or 0)
    cloud = generate_scene(spec, profile)
    out = _out_dir(args.out)
    ext = "json" if args.format == "internal-json" else "ply"
    save_cloud(cloud, out / f"cloud.{ext}", args.format)
    spec.save(out / "scene.json")
    log.info("wrote %d points, %d objects to %s", len(cloud), len(spec.objects), out)
    return EXIT_OK


def _detect_files(cloud, cfg, args):
    scores = s_f = None
    if args.scores:
        scores = load_scores(args.scores, len(cloud))
    if cfg.score_source == "file":
        if not args.s_f:
            raise UsageError("--score-source file needs --s-f")
        s_f = load_s_f(args.s_f)
    return scores, s_f


def cmd_detect(args) -> int:
    cfg = _config(args)
    raw = _load(args.cloud)
    if args.scores and cfg.voxel > 0:
        raise UsageError("--scores are per input point; pass --voxel 0 with them")
    cloud = _prepare(raw, cfg)
    if len(cloud) == 0:
        print("error: cloud has no points", file=sys.stderr)
        return EXIT_EMPTY
    scores, s_f = _detect_files(cloud, cfg, args)
    det = detect(cloud, cfg, scores=scores, s_f_values=s_f)
    out = _out_dir(args.out)
    save_cloud(cloud, out / "cloud.ply", "ply-binary-le")
    det.instances.save(out / "instances.json")
    (out / "scores.json").write_text(
        json.dumps({"instances": [s.to_dict() for s in det.scored]}, indent=2, sort_keys=True)
    )
    print(f"{len(det.valid)} instances ({len(det.scored)} proposals, "
          f"{int(det.mask.sum())} foreground points)")
    return EXIT_OK


def cmd_grasp(args) -> int:
    cfg = _config(args)
    calib = None
    if cfg.calibration:
        if not Path(cfg.calibration).is_file():
            raise InputError(f"calibration file not found: {cfg.calibration}")
        try:
            calib = CalibrationExtrinsics.load(cfg.calibration)
        except (KeyError, json.JSONDecodeError) as exc:
            raise InputError(f"{cfg.calibration}: malformed calibration: {exc}") from exc
    cloud = _prepare(_load(args.cloud), cfg)
    episode = run_grasp_loop(cloud, cfg, calib)
    out = _out_dir(args.out)
    save_cloud(cloud, out / "cloud.ply", "ply-binary-le")
    episode.save(out / "episode.jsonl")
    print(f"{len(episode.grasps)} grasps, termination: {episode.termination}")
    if episode.termination.startswith("error"):
        return EXIT_DATA
    return EXIT_OK if episode.grasps else EXIT_EMPTY


def _load_predictions(args, n_points: int):
    try:
        inst = InstanceSet.load(args.pred)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.pred}: malformed prediction file: {exc}") from exc
    if len(inst.labels) != n_points:
        raise InputError(
            f"{args.pred}: {len(inst.labels)} assignments for a {n_points}-point cloud"
        )
    members = inst.instances
    if args.pred_scores:
        try:
            rows = json.loads(Path(args.pred_scores).read_text())["instances"]
            sc = {int(r["instance_id"]): float(r["sc"]) for r in rows}
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.pred_scores}: malformed score file: {exc}") from exc
        return [(members[k], sc[k]) for k in range(len(members)) if sc.get(k, -1.0) >= 0]
    return [(m, 1.0) for m in members]


def cmd_eval(args) -> int:
    gt_cloud = _load(args.gt)
    if not gt_cloud.has_gt:
        raise InputError(f"{args.gt}: cloud has no gt_instance labels")
    report: dict = {}
    if args.pred:
        preds = _load_predictions(args, len(gt_cloud))
        report.update(map_suite(preds, gt_instances(gt_cloud)))
        print(format_table({args.name: report}))
    if args.episode:
        try:
            episode = EpisodeLog.load(args.episode)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"{args.episode}: malformed episode log: {exc}") from exc
        try:
            em = episode_metrics(episode, gt_cloud)
        except (IndexError, ValueError) as exc:
            raise InputError(str(exc)) from exc
        report["episode"] = em
        print(f"recognition rate {100 * em['recognition_rate']:.1f}%  "
              f"grasp rate {100 * em['grasp_rate']:.1f}%")
    if not report:
        raise UsageError("eval needs --pred and/or --episode")
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    cloud = _prepare(_load(args.cloud), cfg)
    if not cloud.has_gt:
        raise InputError(f"{args.cloud}: cloud has no gt_instance labels")
    gts = gt_instances(cloud)
    rows = {}
    for name in ("binary", "distance"):
        c = PipelineConfig(**{**cfg.to_dict(), "clusterer": name})
        det = detect(cloud, c)
        rows[name] = map_suite(scored_predictions(det.instances, det.scored), gts)
    print(format_table(rows))
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tablegrasp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesise a labelled tabletop scene")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--spec", help="scene spec JSON")
    g.add_argument("--profile", choices=sorted(PROFILES), default="ainstec")
    g.add_argument("--seed", type=int)
    g.add_argument("--format", choices=FORMATS, default="ply-binary-le")
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("detect", help="segment, cluster and score one cloud")
    d.add_argument("cloud")
    _add_config_flags(d)
    d.add_argument("--scores", help="per-point class scores (CSV or JSON)")
    d.add_argument("--s-f", help="per-instance feature scores (JSON)")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_detect)

    gr = sub.add_parser("grasp", help="run the grasp loop on one cloud")
    gr.add_argument("cloud")
    _add_config_flags(gr)
    gr.add_argument("--calib", help="camera-to-robot calibration JSON")
    gr.add_argument("--out", required=True)
    gr.set_defaults(func=cmd_grasp)

    e = sub.add_parser("eval", help="AP metrics and/or episode metrics")
    e.add_argument("--gt", required=True, help="cloud with gt_instance labels")
    e.add_argument("--pred", help="instances.json from detect")
    e.add_argument("--pred-scores", help="scores.json from detect")
    e.add_argument("--episode", help="episode.jsonl from grasp")
    e.add_argument("--name", default="prediction")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare-clustering", help="density-split vs distance clustering AP")
    c.add_argument("cloud")
    _add_config_flags(c)
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (InputError, CloudFormatError, ScoreFileError, SceneSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
