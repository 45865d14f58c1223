"""Command-line interface: `flow` (run the pipeline), `synth` (generate
scenes), and `eval` (score flow/ego estimates).

Exit codes: 0 on success, 2 on usage or input errors (missing/unparsable
files, invalid scene specs, mismatched lengths), 3 on numerical failures
inside the pipeline (degenerate geometry, no background, ...).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time

import numpy as np

from .energy import total_energy
from .geom import FlowField, PointCloud
from .io import (
    ClusterSummary,
    ParseError,
    RunReport,
    read_config,
    read_point_cloud_any,
    read_transform,
    serialize_report,
    write_point_cloud,
    write_report,
    write_transform,
)
from .metrics import ego_metrics, flow_metrics
from .pipeline import PipelineConfig, infer_rigid_flow, preprocess, with_height_mask, with_xyz_features
from .synthetic import SceneSpec, generate_scene

__all__ = ["main"]


class _InputError(Exception):
    """Bad inputs or flag combinations; maps to exit code 2."""


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        return value
    return int(os.environ.get("RGF_THREADS", "0"))


def _load_cloud(path: str) -> PointCloud:
    if not os.path.exists(path):
        raise _InputError(f"no such file: {path}")
    return read_point_cloud_any(path)


def _attach_features(pc: PointCloud, mode: str, path: str | None, side: str) -> PointCloud:
    if mode == "oracle":
        if pc.features is None:
            raise _InputError(
                f"{side} cloud has no embedded features; --features oracle needs generated scenes"
            )
        return pc
    if mode == "xyz":
        return with_xyz_features(pc)
    if path is None:
        raise _InputError(f"--features file requires --{side}-features")
    donor = _load_cloud(path)
    if donor.features is None or len(donor) != len(pc):
        raise _InputError(f"feature file {path} does not match the {side} cloud")
    return dataclasses.replace(pc, features=donor.features)


def _attach_masks(pc: PointCloud, mode: str, path: str | None, height: float, side: str) -> PointCloud:
    if mode == "oracle":
        if pc.fg_prob is None:
            raise _InputError(
                f"{side} cloud has no embedded fg_prob; --masks oracle needs generated scenes"
            )
        return pc
    if mode == "height":
        return with_height_mask(pc, height)
    if path is None:
        raise _InputError(f"--masks file requires --{side}-masks")
    donor = _load_cloud(path)
    if donor.fg_prob is None or len(donor) != len(pc):
        raise _InputError(f"mask file {path} does not match the {side} cloud")
    return dataclasses.replace(pc, fg_prob=donor.fg_prob)


def cmd_flow(args: argparse.Namespace) -> int:
    timings: dict[str, float] = {}
    try:
        cfg = read_config(args.config) if args.config else PipelineConfig()
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        cfg = dataclasses.replace(cfg, threads=_resolve_threads(args.threads))
        cfg.validate()

        t0 = time.perf_counter()
        src = _load_cloud(args.src)
        tgt = _load_cloud(args.tgt)
        src = _attach_features(src, args.features, args.src_features, "src")
        tgt = _attach_features(tgt, args.features, args.tgt_features, "tgt")
        src = _attach_masks(src, args.masks, args.src_masks, args.mask_height, "src")
        tgt = _attach_masks(tgt, args.masks, args.tgt_masks, args.mask_height, "tgt")
        timings["read_ms"] = 1e3 * (time.perf_counter() - t0)
    except ParseError as exc:
        return _fail(str(exc), 2)
    except (_InputError, OSError) as exc:
        return _fail(str(exc), 2)

    try:
        t0 = time.perf_counter()
        rng = np.random.default_rng(cfg.seed)
        x = preprocess(src, cfg, rng)
        y = preprocess(tgt, cfg, rng)
        timings["preprocess_ms"] = 1e3 * (time.perf_counter() - t0)

        t0 = time.perf_counter()
        decomp, flow = infer_rigid_flow(x, y, cfg, refine=args.refine, rng=rng)
        timings["infer_ms"] = 1e3 * (time.perf_counter() - t0)
    except ValueError as exc:
        return _fail(f"numerical failure: {exc}", 3)

    report = RunReport(config=cfg.to_flat_dict())
    report.extra["command"] = "flow"
    report.extra["src"] = args.src
    report.extra["tgt"] = args.tgt
    report.extra["features"] = args.features
    report.extra["masks"] = args.masks
    report.extra["refine"] = "true" if args.refine else "false"
    report.extra["src_points"] = str(len(x))
    report.extra["tgt_points"] = str(len(y))
    report.extra["src_voxels"] = str(len(decomp.voxel_x))
    report.extra["tgt_voxels"] = str(len(decomp.voxel_y))
    report.extra["ego_transform"] = " ".join(
        repr(float(v))
        for v in np.concatenate(
            [decomp.ego.rotation, decomp.ego.translation[:, None]], axis=1
        ).reshape(-1)
    )

    if x.flow is not None:
        report.flow_metrics = flow_metrics(flow, FlowField(x.flow))

    try:
        if args.gt_ego:
            gt_ego = read_transform(args.gt_ego)
            report.ego_metrics = ego_metrics(decomp.ego, gt_ego)
            if args.masks == "oracle" and x.fg_prob is not None and y.fg_prob is not None:
                fg_index = np.flatnonzero(~decomp.bg_mask_x)
                report.energy = total_energy(
                    pred_fg_x=x.fg_prob,
                    gt_fg_x=(x.fg_prob > 0.5).astype(float),
                    pred_fg_y=y.fg_prob,
                    gt_fg_y=(y.fg_prob > 0.5).astype(float),
                    bg_points=decomp.voxel_x.select(decomp.bg_mask_x),
                    ego_est=decomp.ego,
                    ego_gt=gt_ego,
                    assignment=decomp.assignment,
                    clusters=decomp.clusters,
                    fg_points=decomp.voxel_x.select(fg_index),
                    fg_flow=decomp.unconstrained_flow,
                    fg_y=decomp.voxel_y.select(~decomp.bg_mask_y),
                    lambda_inlier=cfg.lambda_inlier,
                    lambda_cd=cfg.lambda_cd,
                    normalized_chamfer=cfg.normalized_chamfer,
                )
    except ParseError as exc:
        return _fail(str(exc), 2)
    except OSError as exc:
        return _fail(str(exc), 2)

    fg_index = np.flatnonzero(~decomp.bg_mask_x)
    for k in range(decomp.clusters.n_clusters):
        report.clusters.append(
            ClusterSummary(
                size=int(np.count_nonzero(decomp.clusters.labels == k)),
                transform=decomp.cluster_transforms[k],
                fitted=bool(decomp.cluster_fitted[k]),
                refined=bool(decomp.cluster_refined[k]),
            )
        )

    t0 = time.perf_counter()
    out_cloud = PointCloud(points=x.points, flow=flow.vectors)
    write_point_cloud(args.out_flow, out_cloud)
    if args.out_ego:
        write_transform(args.out_ego, decomp.ego)
    timings["write_ms"] = 1e3 * (time.perf_counter() - t0)
    report.timings_ms = timings

    if args.report:
        write_report(args.report, report, include_timings=args.timings)
    else:
        sys.stdout.write(serialize_report(report, include_timings=args.timings))
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SceneSpec(
        n_objects=args.objects,
        points_per_object=args.points_per_object,
        background_points=args.background_points,
        background_extent=args.extent,
        ego_rotation_deg=args.ego_rotation_deg,
        ego_translation=args.ego_translation,
        object_rotation_deg=args.object_rotation_deg,
        object_translation=args.object_translation,
        noise_sigma=args.noise_sigma,
        dropout=args.dropout,
        feature_dim=args.feature_dim,
        min_object_gap=args.gap,
        seed=args.seed if args.seed is not None else 0,
    )
    try:
        scene = generate_scene(spec)
    except ValueError as exc:
        return _fail(str(exc), 2)

    prefix = args.out_prefix
    paths = {
        "x": f"{prefix}_x.rgf",
        "y": f"{prefix}_y.rgf",
        "gt_flow": f"{prefix}_gt_flow.rgf",
        "ego": f"{prefix}_ego.txt",
    }
    try:
        write_point_cloud(paths["x"], scene.frame_x)
        write_point_cloud(paths["y"], scene.frame_y)
        write_point_cloud(
            paths["gt_flow"],
            PointCloud(points=scene.frame_x.points, flow=scene.gt_flow.vectors),
        )
        write_transform(paths["ego"], scene.gt_ego)
        for k, t in enumerate(scene.gt_object_transforms):
            write_transform(f"{prefix}_object_{k}.txt", t)
    except OSError as exc:
        return _fail(str(exc), 2)
    for name, path in paths.items():
        print(f"{name}: {path}")
    for k in range(len(scene.gt_object_transforms)):
        print(f"object_{k}: {prefix}_object_{k}.txt")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        pred = _load_cloud(args.pred)
        gt = _load_cloud(args.gt)
        if pred.flow is None:
            raise _InputError(f"no flow data in {args.pred}")
        if gt.flow is None:
            raise _InputError(f"no flow data in {args.gt}")
        report = RunReport(extra={"command": "eval", "pred": args.pred, "gt": args.gt})
        report.flow_metrics = flow_metrics(FlowField(pred.flow), FlowField(gt.flow))
        if args.pred_ego or args.gt_ego:
            if not (args.pred_ego and args.gt_ego):
                raise _InputError("--pred-ego and --gt-ego must be given together")
            report.ego_metrics = ego_metrics(
                read_transform(args.pred_ego), read_transform(args.gt_ego)
            )
    except ParseError as exc:
        return _fail(str(exc), 2)
    except (_InputError, OSError, ValueError) as exc:
        return _fail(str(exc), 2)

    text = serialize_report(report)
    sys.stdout.write(text)
    if args.report:
        try:
            with open(args.report, "w") as fh:
                fh.write(text)
        except OSError as exc:
            return _fail(str(exc), 2)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rigidflow",
        description="Rigid multi-body scene flow: inference, synthetic scenes, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_flow = sub.add_parser("flow", help="estimate rigid scene flow for a frame pair")
    p_flow.add_argument("--src", required=True, help="source cloud (.rgf or xyz text)")
    p_flow.add_argument("--tgt", required=True, help="target cloud (.rgf or xyz text)")
    p_flow.add_argument(
        "--features",
        choices=["oracle", "xyz", "file"],
        default="oracle",
        help="feature provider: embedded attributes, raw coordinates, or separate files",
    )
    p_flow.add_argument("--src-features", help="cloud file donating source features")
    p_flow.add_argument("--tgt-features", help="cloud file donating target features")
    p_flow.add_argument(
        "--masks",
        choices=["oracle", "height", "file"],
        default="oracle",
        help="foreground provider: embedded fg_prob, height heuristic, or separate files",
    )
    p_flow.add_argument("--src-masks", help="cloud file donating source fg_prob")
    p_flow.add_argument("--tgt-masks", help="cloud file donating target fg_prob")
    p_flow.add_argument("--mask-height", type=float, default=-0.5, help="height threshold (y up)")
    p_flow.add_argument("--refine", action="store_true", help="run ICP test-time refinement")
    p_flow.add_argument("--config", help="flat key=value config file")
    p_flow.add_argument("--seed", type=int, help="override the config seed")
    p_flow.add_argument("--threads", type=int, help="worker thread cap (0 = auto; env RGF_THREADS)")
    p_flow.add_argument("--gt-ego", help="ground-truth ego transform for error reporting")
    p_flow.add_argument("--out-flow", default="flow.rgf", help="output flow cloud path")
    p_flow.add_argument("--out-ego", help="optional path for the estimated ego transform")
    p_flow.add_argument("--report", help="write the run report here instead of stdout")
    p_flow.add_argument("--timings", action="store_true", help="include timing lines in the report")
    p_flow.set_defaults(func=cmd_flow)

    p_synth = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    p_synth.add_argument("--out-prefix", required=True, help="prefix for all written files")
    p_synth.add_argument("--objects", type=int, default=3)
    p_synth.add_argument("--points-per-object", type=int, default=200)
    p_synth.add_argument("--background-points", type=int, default=2000)
    p_synth.add_argument("--extent", type=float, default=16.0)
    p_synth.add_argument("--ego-rotation-deg", type=float, default=5.0)
    p_synth.add_argument("--ego-translation", type=float, default=2.0)
    p_synth.add_argument("--object-rotation-deg", type=float, default=10.0)
    p_synth.add_argument("--object-translation", type=float, default=3.0)
    p_synth.add_argument("--noise-sigma", type=float, default=0.005)
    p_synth.add_argument("--dropout", type=float, default=0.1)
    p_synth.add_argument("--feature-dim", type=int, default=16)
    p_synth.add_argument("--gap", type=float, default=1.5)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_eval = sub.add_parser("eval", help="score a predicted flow (and optionally ego) file")
    p_eval.add_argument("--pred", required=True, help="predicted flow cloud")
    p_eval.add_argument("--gt", required=True, help="ground-truth flow cloud")
    p_eval.add_argument("--pred-ego", help="estimated ego transform file")
    p_eval.add_argument("--gt-ego", help="ground-truth ego transform file")
    p_eval.add_argument("--report", help="also write the report to this path")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
