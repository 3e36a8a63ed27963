"""Command-line surface tying the modules into reproducible pipelines.

Commands: ``gen`` (synthetic scenes), ``render`` (depth/disparity/layout),
``convert`` (between factored scenes, scene voxels, depth maps, and point
clouds), ``eval`` (component metrics with summary columns), ``ap``
(detection AP with the relaxation sweep), ``compare-reps`` (the five-task
cross-representation evaluation as CSV), and ``grad-check`` (loss-kernel
gradient verification).

Exit codes: 0 success, 1 validation failure, 2 I/O failure.  Diagnostics
go to stderr; files are written atomically.  Every command driven by a
``--seed`` is byte-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .compare import compare_representations, cumulative_curve
from .detection import ThresholdTuple, ap_sweep, evaluate_dataset
from .generator import GeneratorConfig, generate_scene
from .io_formats import (
    FileFormatError,
    atomic_write_text,
    read_depth_pfm,
    read_scene,
    write_depth_pfm,
    write_pfm,
    write_scene,
    write_voxels,
)
from .losses import gradient_report
from .metrics import DEFAULT_DELTAS, component_errors, summarize
from .render import (
    depth_to_disparity,
    depth_to_pointcloud,
    pointcloud_to_voxels,
    render_depth_analytic,
    render_depth_voxel,
)
from .scene import compose_scene_voxels

__all__ = ["main"]


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def _scene_files(spec: str) -> list[Path]:
    p = Path(spec)
    if p.is_dir():
        files = sorted(p.glob("*.json"))
        if not files:
            raise ValueError(f"no scene JSON files in {p}")
        return files
    if not p.exists():
        raise FileNotFoundError(f"no such file or directory: {p}")
    return [p]


# ---------------------------------------------------------------------------
# gen

def _cmd_gen(args) -> int:
    overrides = {}
    if args.config:
        overrides.update(json.loads(Path(args.config).read_text()))
    if args.objects is not None:
        overrides["object_count_range"] = tuple(args.objects)
    if "camera" in overrides:
        from .geometry import Camera

        overrides["camera"] = Camera(**overrides["camera"])
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.width or args.height:
        from .geometry import DEFAULT_CAMERA

        width = args.width or 64
        height = args.height or 48
        overrides["camera"] = DEFAULT_CAMERA.scaled(width, height)
    for i in range(args.count):
        cfg = GeneratorConfig(seed=args.seed + i, **overrides)
        scene = generate_scene(cfg)
        out = out_dir / f"scene_{args.seed + i:05d}.json"
        write_scene(scene, out)
        for warning in scene.warnings:
            _log(f"{out.name}: {warning}")
    _log(f"wrote {args.count} scene(s) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# render

def _cmd_render(args) -> int:
    scene = read_scene(args.scene)
    if args.what == "layout":
        depth = render_depth_analytic(scene, include_objects=False)
    elif args.method == "analytic":
        depth = render_depth_analytic(scene, include_objects=True)
    else:
        depth = render_depth_voxel(scene, tau=args.tau)
    if args.unit == "disparity":
        write_pfm(args.out, depth_to_disparity(depth).disparity)
    else:
        write_depth_pfm(args.out, depth)
    return 0


# ---------------------------------------------------------------------------
# convert

def _cmd_convert(args) -> int:
    if args.scene and args.depth:
        raise ValueError("pass either --scene or --depth, not both")
    if args.scene:
        scene = read_scene(args.scene)
        if args.to == "scene-voxels":
            write_voxels(args.out, compose_scene_voxels(scene, tau=args.tau))
        elif args.to == "depth":
            write_depth_pfm(args.out, render_depth_voxel(scene, tau=args.tau))
        else:
            raise ValueError(f"cannot convert a scene to {args.to!r}")
        return 0
    if args.depth:
        if not args.camera_scene:
            raise ValueError("--depth input needs --camera-scene for intrinsics")
        camera = read_scene(args.camera_scene).camera
        depth = read_depth_pfm(args.depth, camera)
        points = depth_to_pointcloud(depth)
        if args.to == "voxels":
            write_voxels(args.out, pointcloud_to_voxels(points))
        elif args.to == "pointcloud":
            _write_csv(args.out, ["x", "y", "z"],
                       [[repr(float(v)) for v in p] for p in points])
        else:
            raise ValueError(f"cannot convert a depth map to {args.to!r}")
        return 0
    raise ValueError("convert needs --scene or --depth")


# ---------------------------------------------------------------------------
# eval

def _paired_scenes(pred_spec: str, gt_spec: str):
    pred_files = _scene_files(pred_spec)
    gt_files = _scene_files(gt_spec)
    if len(pred_files) != len(gt_files):
        raise ValueError(
            f"prediction/ground-truth counts differ: {len(pred_files)} vs {len(gt_files)}")
    return [(read_scene(p), read_scene(g), g.stem) for p, g in zip(pred_files, gt_files)]


def _cmd_eval(args) -> int:
    pairs = _paired_scenes(args.pred, args.gt)
    per_instance = []
    for pred_scene, gt_scene, name in pairs:
        if len(pred_scene.objects) != len(gt_scene.objects):
            raise ValueError(
                f"{name}: object counts differ "
                f"({len(pred_scene.objects)} vs {len(gt_scene.objects)}); "
                "eval pairs objects by index")
        for i, (p, g) in enumerate(zip(pred_scene.objects, gt_scene.objects)):
            err = component_errors(p, g, tau=args.tau)
            per_instance.append({
                "scene": name, "index": i, "class_label": g.class_label,
                "shape_iou": err.shape_iou, "rot_err_rad": err.rot_err,
                "trans_err_m": err.trans_err, "scale_err_log2": err.scale_err,
                "box_iou": err.box_iou,
            })
    if not per_instance:
        raise ValueError("no object instances to evaluate")

    def stats(key, threshold, direction, units):
        s = summarize([r[key] for r in per_instance], threshold, direction)
        return {"median": s.median, "fraction_within": s.fraction_within,
                "threshold": s.threshold, "direction": s.direction, "units": units}

    summary = {
        "shape": stats("shape_iou", DEFAULT_DELTAS["shape"], "above", "iou"),
        "rotation": stats("rot_err_rad", DEFAULT_DELTAS["rotation"], "below", "radians"),
        "translation": stats("trans_err_m", DEFAULT_DELTAS["translation"], "below", "meters"),
        "scale": stats("scale_err_log2", DEFAULT_DELTAS["scale"], "below", "log2"),
    }
    boxes = [r["box_iou"] for r in per_instance if r["box_iou"] is not None]
    if len(boxes) == len(per_instance):
        s = summarize(boxes, DEFAULT_DELTAS["box2d"], "above")
        summary["box2d"] = {"median": s.median, "fraction_within": s.fraction_within,
                            "threshold": s.threshold, "direction": s.direction, "units": "iou"}
    else:
        summary["box2d"] = None

    report = {"format_version": 1, "tau": args.tau, "count": len(per_instance),
              "per_instance": per_instance, "summary": summary}
    _write_json(args.out, report)
    if args.csv:
        rows = [[name, s["median"], s["fraction_within"], s["threshold"], s["direction"],
                 s["units"]]
                for name, s in summary.items() if s is not None]
        _write_csv(args.csv, ["component", "median", "fraction_within", "threshold",
                              "direction", "units"], rows)
    med_deg = math.degrees(summary["rotation"]["median"])
    _log(f"evaluated {len(per_instance)} instances; median rotation error "
         f"{med_deg:.2f} deg (report stores radians)")
    return 0


# ---------------------------------------------------------------------------
# ap

def _threshold_arg(value: str) -> float | None:
    if value.lower() in ("none", "wildcard", "."):
        return None
    return float(value)


def _cmd_ap(args) -> int:
    det_pairs = _paired_scenes(args.dets, args.gt)
    pairs = [(list(d.objects), list(g.objects)) for d, g, _ in det_pairs]
    base = ThresholdTuple(box2d=args.delta_box2d, shape=args.delta_shape,
                          rotation=args.delta_rot, translation=args.delta_trans,
                          scale=args.delta_scale)
    rows = []
    for row in ap_sweep(pairs, base, tau=args.tau):
        outcome = evaluate_dataset(pairs, row.thresholds, tau=args.tau)
        rows.append({
            "name": row.name,
            "thresholds": {
                "box2d": row.thresholds.box2d, "shape": row.thresholds.shape,
                "rotation": row.thresholds.rotation,
                "translation": row.thresholds.translation, "scale": row.thresholds.scale,
            },
            "ap": row.ap,
            "precision": outcome.precision.tolist(),
            "recall": outcome.recall.tolist(),
        })
    n_gt = sum(len(g) for _, g in pairs)
    n_det = sum(len(d) for d, _ in pairs)
    report = {"format_version": 1, "tau": args.tau, "n_gt": n_gt,
              "n_detections": n_det, "rows": rows}
    _write_json(args.out, report)
    if args.csv:
        _write_csv(args.csv, ["name", "ap"], [[r["name"], r["ap"]] for r in rows])
    _log(f"AP over {n_det} detections / {n_gt} ground truths: "
         + ", ".join(f"{r['name']}={r['ap']:.3f}" for r in rows[:1]))
    return 0


# ---------------------------------------------------------------------------
# compare-reps

def _cmd_compare_reps(args) -> int:
    scenes = []
    if args.scenes:
        for f in _scene_files(args.scenes):
            scenes.append((f.stem, read_scene(f)))
    else:
        for i in range(args.gen_count):
            seed = args.gen_seed + i
            scenes.append((f"seed_{seed:05d}", generate_scene(GeneratorConfig(seed=seed))))
    if not scenes:
        raise ValueError("no scenes to compare")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, scene in scenes:
        rows.extend(compare_representations(scene, name, tau=args.tau))
    _write_csv(out_dir / "values.csv",
               ["scene", "task", "representation", "object_index", "value"],
               [[r.scene_id, r.task, r.representation,
                 "" if r.object_index is None else r.object_index, repr(r.value)]
                for r in rows])
    curve_rows = []
    for task in sorted({r.task for r in rows}):
        for rep in sorted({r.representation for r in rows if r.task == task}):
            values = [r.value for r in rows if r.task == task and r.representation == rep
                      and math.isfinite(r.value)]
            xs, fracs = cumulative_curve(values)
            curve_rows.extend([[task, rep, repr(float(x)), repr(float(f))]
                               for x, f in zip(xs, fracs)])
    _write_csv(out_dir / "curves.csv", ["task", "representation", "value", "fraction"],
               curve_rows)
    _log(f"compared {len(scenes)} scene(s); wrote values.csv and curves.csv to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# grad-check

def _cmd_grad_check(args) -> int:
    report = gradient_report(seed=args.seed, n_points=args.points, step=args.step,
                             tolerance=args.tolerance)
    _write_json(args.out, report)
    for entry in report["kernels"]:
        status = "ok" if entry["passed"] else "FAIL"
        _log(f"{entry['kernel']}: max rel err {entry['max_rel_err']:.3e} [{status}]")
    if not report["all_passed"]:
        _log("gradient verification failed")
        return 1
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenefactor", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic ground-truth scenes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--objects", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--config", help="JSON file with GeneratorConfig fields")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("render", help="render depth/disparity from a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--what", choices=["visible", "layout"], default="visible")
    p.add_argument("--method", choices=["analytic", "voxel"], default="analytic")
    p.add_argument("--unit", choices=["depth", "disparity"], default="depth")
    p.add_argument("--tau", type=float, default=0.5)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("convert", help="convert between representations")
    p.add_argument("--scene")
    p.add_argument("--depth")
    p.add_argument("--camera-scene", help="scene JSON supplying intrinsics for --depth")
    p.add_argument("--to", required=True,
                   choices=["scene-voxels", "depth", "voxels", "pointcloud"])
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("eval", help="component metrics for paired scenes")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--tau", type=float, default=0.5)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ap", help="detection AP with the relaxation sweep")
    p.add_argument("--dets", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--delta-box2d", type=_threshold_arg, default=DEFAULT_DELTAS["box2d"])
    p.add_argument("--delta-shape", type=_threshold_arg, default=DEFAULT_DELTAS["shape"])
    p.add_argument("--delta-rot", type=_threshold_arg, default=DEFAULT_DELTAS["rotation"])
    p.add_argument("--delta-trans", type=_threshold_arg, default=DEFAULT_DELTAS["translation"])
    p.add_argument("--delta-scale", type=_threshold_arg, default=DEFAULT_DELTAS["scale"])
    p.set_defaults(func=_cmd_ap)

    p = sub.add_parser("compare-reps", help="five-task representation comparison")
    p.add_argument("--scenes", help="directory of scene JSON files")
    p.add_argument("--gen-seed", type=int, default=0)
    p.add_argument("--gen-count", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.set_defaults(func=_cmd_compare_reps)

    p = sub.add_parser("grad-check", help="verify loss-kernel gradients")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=_cmd_grad_check)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileFormatError as exc:
        _log(f"error: {exc}")
        return 1
    except ValueError as exc:
        _log(f"error: {exc}")
        return 1
    except OSError as exc:
        _log(f"i/o error: {exc}")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
