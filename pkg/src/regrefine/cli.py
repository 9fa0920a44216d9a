"""Command-line entry points.

Subcommands:
  refine         refine a source-to-reference transform for two clouds
  eval           score saved (or freshly computed) refinements vs ground truth
  genscene       write a reproducible synthetic scene pair with ground truth
  extract-depth  render the cross-view depth maps and framing metadata that
                 an external feature extractor consumes

Hard failures print one JSON object to stderr and exit with a code from
EXIT_CODES; a refinement that fell back to the initial transform exits
with the dedicated degraded code.
"""

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, default_config, load_config, save_config
from .core import PointCloud, RigidTransform, rotation_error, translation_error
from .errors import (
    ConfigError,
    EmptyRenderError,
    EstimationError,
    FeatureFormatError,
    InputValidationError,
    ParseError,
)
from .fileio import load_ply, load_pose, save_pose
from .pipeline import run_refine
from .projection import densify_depth, make_view_pairs, write_depth_png
from .report import read_report, write_report
from .scenes import SCENE_FILES, generate_scene, load_scene, save_scene

CONFIG_ENV = "REGREFINE_CONFIG"

EXIT_CODES = {
    "success": 0,
    "usage": 2,  # argparse's own
    "degraded": 3,
    "invalid_input": 4,
    "parse": 5,
    "config": 6,
    "feature_format": 7,
    "estimation": 8,
    "io": 9,
}

_ERROR_CODE_MAP = (
    (ParseError, "parse"),
    (ConfigError, "config"),
    (FeatureFormatError, "feature_format"),
    (EstimationError, "estimation"),
    (EmptyRenderError, "estimation"),
    (InputValidationError, "invalid_input"),
    (OSError, "io"),
)


def _fail(exc) -> int:
    for klass, family in _ERROR_CODE_MAP:
        if isinstance(exc, klass):
            code = EXIT_CODES[family]
            break
    else:
        raise exc
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _resolve_config(args) -> PipelineConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    if path:
        cfg = load_config(path)
    else:
        cfg = default_config(getattr(args, "profile", None) or "indoor")
    overrides = {}
    for key in ("provider", "feature_dir", "seed", "n_keypoints", "tau_a"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _add_config_args(sub):
    sub.add_argument("--config", "-c", help=f"YAML config path (default ${CONFIG_ENV})")
    sub.add_argument("--profile", choices=("indoor", "outdoor"),
                     help="built-in defaults to start from when no config file is given")
    sub.add_argument("--provider", choices=("none", "synthetic", "files"))
    sub.add_argument("--feature-dir", dest="feature_dir",
                     help="directory of precomputed feature files (provider=files)")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--n-keypoints", dest="n_keypoints", type=int)
    sub.add_argument("--tau-a", dest="tau_a", type=float)


def _load_cloud(path):
    """Load a cloud, attaching keypoint/descriptor sidecars when present.

    For ``X.ply`` the sidecars are ``X_keypoints.npy`` (point indices) and
    ``X_descriptors.npy`` (row-aligned vectors), the layout genscene
    writes. Without them, keypoints are sampled and described from the
    geometry downstream.
    """
    cloud = load_ply(path)
    stem = Path(path).with_suffix("")
    kp, desc = Path(f"{stem}_keypoints.npy"), Path(f"{stem}_descriptors.npy")
    if kp.is_file() and desc.is_file():
        cloud = PointCloud(cloud.points, keypoint_indices=np.load(kp),
                           descriptors=np.load(desc))
    return cloud


def _cmd_refine(args) -> int:
    cfg = _resolve_config(args)
    reference = _load_cloud(args.reference)
    source = _load_cloud(args.source)
    t_init = load_pose(args.init) if args.init else RigidTransform.identity()
    pair_id = args.pair_id or f"{Path(args.reference).stem}__{Path(args.source).stem}"
    report = run_refine(reference, source, t_init, cfg, pair_id=pair_id)
    include_timing = not args.no_timing
    if args.report:
        write_report(args.report, report, include_timing)
    else:
        sys.stdout.write(report.to_json(include_timing))
    if args.out_pose:
        save_pose(args.out_pose, report.transform)
    return EXIT_CODES["degraded"] if report.degraded else EXIT_CODES["success"]


def _error_stats(values):
    if not values:
        return None
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "median": float(np.median(arr))}


def _cmd_eval(args) -> int:
    """Score refined transforms against ground-truth poses.

    Each scene directory is scored from its saved report.json when one
    exists; otherwise the pair is refined in-process first. Directories
    without a ground-truth pose are excluded and counted, not failed.
    """
    cfg = _resolve_config(args)
    re_thresh = args.re_thresh if args.re_thresh is not None else cfg.rr_re_deg
    te_thresh = args.te_thresh if args.te_thresh is not None else cfg.rr_te_m
    rows = []
    unevaluated = 0
    for scene_dir in args.scene_dirs:
        d = Path(scene_dir)
        gt_path = d / SCENE_FILES["t_gt"]
        if not gt_path.is_file():
            unevaluated += 1
            continue
        t_gt = load_pose(gt_path)
        report_path = d / "report.json"
        if report_path.is_file():
            report = read_report(report_path)
        else:
            scene = load_scene(d)
            report = run_refine(scene.p, scene.q, scene.t_init, cfg,
                                pair_id=d.name)
            if args.write_reports:
                write_report(report_path, report,
                             include_timing=not args.no_timing)
        re = rotation_error(report.transform, t_gt)
        te = translation_error(report.transform, t_gt)
        rows.append({
            "pair_id": report.pair_id,
            "re_deg": re,
            "te_m": te,
            "re_init_deg": rotation_error(report.initial_transform, t_gt),
            "te_init_m": translation_error(report.initial_transform, t_gt),
            "success": bool(re < re_thresh and te < te_thresh),
            "degraded": bool(report.degraded),
            "winning_set": report.winning_set,
        })
    if not rows:
        raise InputValidationError(
            "nothing to evaluate: every input was excluded for a missing "
            "ground-truth pose")
    successes = [r for r in rows if r["success"]]
    summary = {
        "schema_version": 1,
        "n_evaluated": len(rows),
        "n_unevaluated": unevaluated,
        "n_degraded": sum(1 for r in rows if r["degraded"]),
        "registration_recall": len(successes) / len(rows),
        "thresholds": {"re_deg": re_thresh, "te_m": te_thresh},
        "all_pairs": {
            "re_deg": _error_stats([r["re_deg"] for r in rows]),
            "te_m": _error_stats([r["te_m"] for r in rows]),
        },
        "success_only": {
            "re_deg": _error_stats([r["re_deg"] for r in successes]),
            "te_m": _error_stats([r["te_m"] for r in successes]),
        },
        "pairs": rows,
    }
    text = json.dumps(summary, sort_keys=True, indent=2) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_CODES["success"]


def _cmd_genscene(args) -> int:
    scene = generate_scene(
        seed=args.seed,
        n_points=args.n_points,
        overlap=args.overlap,
        noise=args.noise,
        init_angle_deg=args.init_angle,
        init_translation=args.init_translation,
        size=args.size,
        n_keypoints=args.keypoints,
        descriptor_corruption=args.corruption,
    )
    save_scene(args.out, scene)
    sys.stdout.write(json.dumps(scene.meta, sort_keys=True, indent=2) + "\n")
    return EXIT_CODES["success"]


def _cmd_extract_depth(args) -> int:
    cfg = _resolve_config(args)
    reference = load_ply(args.reference)
    source = load_ply(args.source)
    t_init = load_pose(args.init) if args.init else RigidTransform.identity()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    k = cfg.intrinsics()
    ref_view, src_view = make_view_pairs(reference, source, t_init, k,
                                         margin=cfg.frame_margin)
    frames = {
        "schema_version": 1,
        "pair_id": args.pair_id,
        "depth_unit": "millimeter",
        "width": k.width,
        "height": k.height,
        "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
        "layers": list(cfg.layers),
        "densified": not args.raw,
        "views": {},
    }
    for vr in (ref_view, src_view):
        files = {}
        for cloud, depth in (("p", vr.depth_p), ("q", vr.depth_q)):
            if not args.raw:
                depth = densify_depth(depth, cfg.densify_kernel, cfg.densify_passes)
            name = f"{args.pair_id}.{vr.view}.{cloud}.png"
            write_depth_png(depth, out / name)
            files[cloud] = name
        frames["views"][vr.view] = {
            "pose": vr.pose.matrix().tolist(),
            "files": files,
        }
    frames_path = out / f"{args.pair_id}.frames.json"
    frames_path.write_text(json.dumps(frames, sort_keys=True, indent=2) + "\n")
    sys.stdout.write(str(frames_path) + "\n")
    return EXIT_CODES["success"]


def _cmd_dump_config(args) -> int:
    cfg = _resolve_config(args)
    if args.out:
        save_config(args.out, cfg)
    else:
        sys.stdout.write(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")
    return EXIT_CODES["success"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regrefine",
        description="Zero-shot point cloud registration refinement",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    refine = subs.add_parser("refine", help="refine one cloud pair")
    refine.add_argument("--reference", "-r", required=True, help="reference cloud (.ply)")
    refine.add_argument("--source", "-s", required=True, help="source cloud (.ply)")
    refine.add_argument("--init", "-i", help="initial pose file (4x4, identity if omitted)")
    refine.add_argument("--pair-id", dest="pair_id")
    refine.add_argument("--report", help="write the report JSON here instead of stdout")
    refine.add_argument("--out-pose", dest="out_pose", help="write the refined pose here")
    refine.add_argument("--no-timing", dest="no_timing", action="store_true",
                        help="omit wall-clock timings for reproducible output")
    _add_config_args(refine)
    refine.set_defaults(func=_cmd_refine)

    ev = subs.add_parser(
        "eval", help="score saved or fresh refinements against ground truth")
    ev.add_argument("scene_dirs", nargs="+", metavar="SCENE_DIR")
    ev.add_argument("--report", help="write the summary JSON here instead of stdout")
    ev.add_argument("--re-thresh", dest="re_thresh", type=float,
                    help="success threshold on rotation error (degrees)")
    ev.add_argument("--te-thresh", dest="te_thresh", type=float,
                    help="success threshold on translation error (meters)")
    ev.add_argument("--write-reports", dest="write_reports", action="store_true",
                    help="save report.json into each scene directory that lacked one")
    ev.add_argument("--no-timing", dest="no_timing", action="store_true")
    _add_config_args(ev)
    ev.set_defaults(func=_cmd_eval)

    gen = subs.add_parser("genscene", help="generate a synthetic scene pair")
    gen.add_argument("--out", "-o", required=True, help="output directory")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--n-points", dest="n_points", type=int, default=20000)
    gen.add_argument("--overlap", type=float, default=0.4)
    gen.add_argument("--noise", type=float, default=0.005)
    gen.add_argument("--init-angle", dest="init_angle", type=float, default=5.0)
    gen.add_argument("--init-translation", dest="init_translation", type=float, default=0.2)
    gen.add_argument("--size", type=float, default=4.0)
    gen.add_argument("--keypoints", type=int, default=500)
    gen.add_argument("--corruption", type=float, default=0.2)
    gen.set_defaults(func=_cmd_genscene)

    ex = subs.add_parser(
        "extract-depth",
        help="render view-pair depth maps and framing metadata for an external extractor",
    )
    ex.add_argument("--reference", "-r", required=True)
    ex.add_argument("--source", "-s", required=True)
    ex.add_argument("--init", "-i", help="initial pose file (identity if omitted)")
    ex.add_argument("--out", "-o", required=True, help="output directory")
    ex.add_argument("--pair-id", dest="pair_id", default="pair")
    ex.add_argument("--raw", action="store_true", help="skip hole densification")
    _add_config_args(ex)
    ex.set_defaults(func=_cmd_extract_depth)

    dump = subs.add_parser("dump-config", help="print or write the effective config")
    dump.add_argument("--out", "-o", help="write YAML here instead of stdout")
    _add_config_args(dump)
    dump.set_defaults(func=_cmd_dump_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # mapped families only; others re-raise
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
