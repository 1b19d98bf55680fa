"""Command line driver: ``monocomb run|synth|eval|convert|warp|interp``.

Exit codes: 0 success, 1 a pipeline stage failed, 2 bad configuration or
input files, 3 an evaluation threshold was exceeded.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import kitti_io
from .assembly import SceneFlowFrame, assemble_dense, assemble_sparse
from .config import PipelineConfig, load_pipeline_config, load_scene
from .evaluation import (
    OutlierRule,
    aggregate,
    check_thresholds,
    scene_flow_outliers,
)
from .exceptions import ConfigError, MonoCombError
from .geometry import DisparityMap, DepthMap, depth_to_disparity, disparity_to_depth
from .interpolation import interpolate, refine_dense
from .kitti_io import CalibrationRecord
from .synthetic import kitti_like_scene, perturb, render, two_layer_scene
from .validation import check_guide
from .warping import warp_with_occlusion

EXIT_OK = 0
EXIT_STAGE = 1
EXIT_CONFIG = 2
EXIT_THRESHOLD = 3

# largest value a 16-bit KITTI disparity/depth PNG can hold
MAX_ENCODABLE = 65535 / kitti_io.DISP_SCALE


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class InputError(Exception):
    pass


@contextmanager
def _stage(name: str, timings: dict | None = None):
    start = time.perf_counter()
    try:
        yield
    except (MonoCombError, ValueError, OSError) as exc:
        raise StageError(name, str(exc)) from exc
    if timings is not None:
        timings[name] = time.perf_counter() - start


def _clamp_encodable(disp: DisparityMap) -> DisparityMap:
    return DisparityMap(np.minimum(disp.values, MAX_ENCODABLE), disp.valid)


def _parse_thresholds(items) -> dict[str, float]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--threshold expects KEY=VALUE, got {item!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--threshold {key}: not a number: {value!r}") from None
    return out


def _write_report(report, stem: Path) -> None:
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".txt").write_text(report.to_table(), encoding="utf-8")
    stem.with_suffix(".kv").write_text(report.to_kv(), encoding="utf-8")


def _threshold_exit(report, thresholds) -> int:
    try:
        violations = check_thresholds(report, thresholds)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    for v in violations:
        print(f"threshold exceeded: {v}", file=sys.stderr)
    return EXIT_THRESHOLD if violations else EXIT_OK


# ---------------------------------------------------------------- run


def _apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    changes = {}
    if args.rule is not None:
        changes["rule"] = OutlierRule(args.rule)
    if args.masked:
        changes["masked"] = True
    if args.depth_cap is not None:
        changes["depth_cap"] = args.depth_cap
    if args.jobs is not None:
        changes["jobs"] = args.jobs
    if args.output is not None:
        changes["output"] = Path(args.output)
    thresholds = dict(cfg.thresholds)
    thresholds.update(_parse_thresholds(args.threshold))
    changes["thresholds"] = thresholds
    return dataclasses.replace(cfg, **changes)


def _load_inputs(cfg: PipelineConfig) -> dict:
    """Read every input and check dimensions before any compute."""
    key = "depth" if cfg.geometry == "depth" else "disp"
    gt = cfg.ground_truth
    try:
        data = {"calib": None, "gt": None, "obj": None}
        if cfg.geometry == "depth":
            data["calib"] = kitti_io.read_calibration(cfg.inputs["calibration"])
            data["t1"] = kitti_io.read_depth_png(cfg.inputs["depth_0"], cfg.depth_cap)
            data["t2"] = kitti_io.read_depth_png(cfg.inputs["depth_1"], cfg.depth_cap)
        else:
            data["t1"] = kitti_io.read_disparity_png(cfg.inputs["disp_0"])
            data["t2"] = kitti_io.read_disparity_png(cfg.inputs["disp_1"])
        data["flow"] = kitti_io.read_flow_png(cfg.inputs["flow"])
        data["image"] = kitti_io.read_image(cfg.inputs["image"])
        sources = {
            cfg.inputs[f"{key}_0"]: data["t1"].shape,
            cfg.inputs[f"{key}_1"]: data["t2"].shape,
            cfg.inputs["flow"]: data["flow"].shape,
            cfg.inputs["image"]: data["image"].shape[:2],
        }
        calib = data["calib"]
        if calib is not None and calib.width is not None:
            sources[cfg.inputs["calibration"]] = (calib.height, calib.width)
        if gt:
            parts = (
                kitti_io.read_disparity_png(gt["disp_0"]),
                kitti_io.read_disparity_png(gt["disp_1"]),
                kitti_io.read_flow_png(gt["flow"]),
            )
            for k, part in zip(("disp_0", "disp_1", "flow"), parts):
                sources[gt[k]] = part.shape
            if "obj_map" in gt:
                data["obj"] = kitti_io.read_object_map(gt["obj_map"])
                sources[gt["obj_map"]] = data["obj"].shape
    except MonoCombError as exc:
        raise InputError(str(exc)) from None

    ref_path, ref_shape = next(iter(sources.items()))
    for path, shape in sources.items():
        if tuple(shape) != tuple(ref_shape):
            raise InputError(
                f"dimension mismatch: {path} is {shape[1]}x{shape[0]} but "
                f"{ref_path} is {ref_shape[1]}x{ref_shape[0]}"
            )
    if gt:
        data["gt"] = SceneFlowFrame(*parts)
    return data


def run_pipeline(cfg: PipelineConfig, log=print) -> int:
    """Execute convert, warp, interpolate, refine, assemble and evaluate."""
    cfg.validate()
    data = _load_inputs(cfg)
    out = Path(cfg.output)
    stages = out / "stages"
    timings: dict[str, float] = {}

    with _stage("convert", timings):
        if cfg.geometry == "depth":
            cam = data["calib"].camera
            d1 = _clamp_encodable(depth_to_disparity(data["t1"], cam))
            d2 = _clamp_encodable(depth_to_disparity(data["t2"], cam))
        else:
            d1, d2 = data["t1"], data["t2"]
        kitti_io.write_disparity_png(d1, stages / "disp_0_virtual.png")
        kitti_io.write_disparity_png(d2, stages / "disp_1_virtual.png")
        # continue from what is on disk so every stage can be replayed from files
        d1 = kitti_io.read_disparity_png(stages / "disp_0_virtual.png")
        d2 = kitti_io.read_disparity_png(stages / "disp_1_virtual.png")
        flow = data["flow"]

    with _stage("warp", timings):
        warp = warp_with_occlusion(
            d1, d2, flow,
            iterations=cfg.morphology_iterations, morphology=cfg.morphology, jobs=cfg.jobs,
        )
        kitti_io.write_disparity_png(warp.warped, stages / "disp_1_warped.png")
        kitti_io.write_mask_png(warp.occlusion, warp.out_of_view, stages / "occ.png")
        warp = dataclasses.replace(
            warp, warped=kitti_io.read_disparity_png(stages / "disp_1_warped.png")
        )
        sparse = assemble_sparse(d1, warp, flow)
        log(f"non-dense density: {100.0 * sparse.density:.2f} %")

    with _stage("interp", timings):
        guide = check_guide(data["image"], d1.shape)
        d2i = interpolate(warp.warped, guide, cfg.interpolator)
        kitti_io.write_disparity_png(_clamp_encodable(d2i), stages / "disp_1_interp.png")
        d2i = kitti_io.read_disparity_png(stages / "disp_1_interp.png")

    with _stage("refine", timings):
        d1r = refine_dense(d1, guide, cfg.interpolator) if d1.is_dense else interpolate(
            d1, guide, cfg.interpolator
        )
        kitti_io.write_disparity_png(_clamp_encodable(d1r), stages / "disp_0_refined.png")
        d1r = kitti_io.read_disparity_png(stages / "disp_0_refined.png")

    with _stage("assemble", timings):
        frame = assemble_dense(d1r, d2i, flow)
        kitti_io.write_disparity_png(frame.d1, out / "disp_0.png")
        kitti_io.write_disparity_png(frame.d2, out / "disp_1.png")
        kitti_io.write_flow_png(frame.flow, out / "flow.png")

    status = EXIT_OK
    if data["gt"] is not None:
        with _stage("eval", timings):
            kw = dict(domain=cfg.domain, penalty_cap=cfg.penalty_cap)
            dense = scene_flow_outliers(frame, data["gt"], data["obj"], cfg.rule, **kw)
            masked = scene_flow_outliers(
                sparse, data["gt"], data["obj"], cfg.rule, masked=True, **kw
            )
            _write_report(dense, out / "report")
            _write_report(masked, out / "report_sparse")
        primary = masked if cfg.masked else dense
        log(primary.to_table().rstrip())
        status = _threshold_exit(primary, cfg.thresholds)

    for name, seconds in timings.items():
        log(f"time {name:<9}{seconds:8.3f} s")
    core = sum(timings.get(k, 0.0) for k in ("warp", "interp", "eval"))
    log(f"time {'warp+interp+eval':<9} {core:8.3f} s")
    return status


def cmd_run(args) -> int:
    if args.config is None:
        raise ConfigError("run needs --config")
    cfg = _apply_overrides(load_pipeline_config(args.config), args)
    return run_pipeline(cfg)


# ---------------------------------------------------------------- synth


def _scene_from_args(args):
    seed = 0 if args.seed is None else args.seed
    if args.scene == "two-layer":
        return two_layer_scene(
            fg_flow=args.fg_flow, bg_flow=args.bg_flow,
            width=args.width, height=args.height, seed=seed,
        )
    if args.scene == "kitti-like":
        return kitti_like_scene(seed=seed)
    scene = load_scene(args.scene)
    if args.seed is not None:
        scene = dataclasses.replace(scene, seed=args.seed)
    return scene


def write_fixture(rendered, out: Path, with_inputs=False, flow_noise=0.0, seed=0) -> list[Path]:
    """Write a rendered scene as a KITTI-format fixture set."""
    out = Path(out)
    written = {
        "image_0.png": lambda p: kitti_io.write_image(rendered.image_1, p),
        "image_1.png": lambda p: kitti_io.write_image(rendered.image_2, p),
        "disp_0.png": lambda p: kitti_io.write_disparity_png(rendered.disparity_1, p),
        "disp_1.png": lambda p: kitti_io.write_disparity_png(rendered.disparity_2_registered, p),
        "flow.png": lambda p: kitti_io.write_flow_png(rendered.flow, p),
        "occ.png": lambda p: kitti_io.write_mask_png(rendered.occlusion, rendered.out_of_view, p),
        "obj_map.png": lambda p: kitti_io.write_object_map(rendered.objects, p),
    }
    paths = []
    for name, write in written.items():
        write(out / name)
        paths.append(out / name)
    if with_inputs:
        inputs = out / "inputs"
        for name, depth in (("depth_0.png", rendered.depth_1), ("depth_1.png", rendered.depth_2)):
            clipped = DepthMap(np.minimum(depth.values, MAX_ENCODABLE), depth.valid, depth_cap=None)
            kitti_io.write_depth_png(clipped, inputs / name)
            paths.append(inputs / name)
        flow = perturb(rendered.flow, flow_noise, seed) if flow_noise > 0 else rendered.flow
        kitti_io.write_flow_png(flow, inputs / "flow.png")
        h, w = rendered.flow.shape
        kitti_io.write_calibration(CalibrationRecord(rendered.camera, w, h), inputs / "calib.txt")
        (out / "run.cfg").write_text(
            "[inputs]\n"
            "depth_0 = inputs/depth_0.png\n"
            "depth_1 = inputs/depth_1.png\n"
            "flow = inputs/flow.png\n"
            "image = image_0.png\n"
            "calibration = inputs/calib.txt\n"
            "\n[ground_truth]\n"
            "disp_0 = disp_0.png\n"
            "disp_1 = disp_1.png\n"
            "flow = flow.png\n"
            "obj_map = obj_map.png\n"
            "\n[pipeline]\n"
            "output = out\n",
            encoding="utf-8",
        )
        paths += [inputs / "flow.png", inputs / "calib.txt", out / "run.cfg"]
    return paths


def cmd_synth(args) -> int:
    scene = _scene_from_args(args)
    with _stage("render"):
        rendered = render(scene)
    with _stage("write"):
        paths = write_fixture(
            rendered, Path(args.output), args.with_inputs, args.flow_noise,
            0 if args.seed is None else args.seed,
        )
    occ = 100.0 * rendered.occlusion.mean()
    oov = 100.0 * rendered.out_of_view.mean()
    print(f"wrote {len(paths)} files to {args.output} (occluded {occ:.2f} %, out of view {oov:.2f} %)")
    return EXIT_OK


# ---------------------------------------------------------------- eval


def _read_frame(directory: Path, role: str) -> SceneFlowFrame:
    paths = {k: directory / f"{k}.png" for k in ("disp_0", "disp_1", "flow")}
    for p in paths.values():
        if not p.is_file():
            raise InputError(f"{role} file not found: {p}")
    try:
        d1 = kitti_io.read_disparity_png(paths["disp_0"])
        d2 = kitti_io.read_disparity_png(paths["disp_1"])
        flow = kitti_io.read_flow_png(paths["flow"])
    except kitti_io.FormatError as exc:
        raise InputError(str(exc)) from None
    for k, comp in (("disp_1", d2), ("flow", flow)):
        if comp.shape != d1.shape:
            raise InputError(
                f"dimension mismatch: {paths[k]} is {comp.shape[1]}x{comp.shape[0]} but "
                f"{paths['disp_0']} is {d1.shape[1]}x{d1.shape[0]}"
            )
    return SceneFlowFrame(d1, d2, flow)


def evaluate_dirs(est_dir: Path, gt_dir: Path, rule, masked, domain="joint"):
    est = _read_frame(est_dir, "estimate")
    gt = _read_frame(gt_dir, "ground truth")
    if est.shape != gt.shape:
        raise InputError(
            f"dimension mismatch: estimate {est_dir} is {est.shape[1]}x{est.shape[0]} but "
            f"ground truth {gt_dir} is {gt.shape[1]}x{gt.shape[0]}"
        )
    obj = None
    if (gt_dir / "obj_map.png").is_file():
        obj = kitti_io.read_object_map(gt_dir / "obj_map.png")
        if obj.shape != gt.shape:
            raise InputError(
                f"dimension mismatch: {gt_dir / 'obj_map.png'} is {obj.width}x{obj.height} but "
                f"{gt_dir / 'disp_0.png'} is {gt.shape[1]}x{gt.shape[0]}"
            )
    return scene_flow_outliers(est, gt, obj, rule, masked=masked, domain=domain)


def cmd_eval(args) -> int:
    est_root, gt_root = Path(args.estimate), Path(args.ground_truth)
    for role, d in (("estimate", est_root), ("ground truth", gt_root)):
        if not d.is_dir():
            raise InputError(f"{role} directory not found: {d}")
    rule = OutlierRule(args.rule or "kitti")
    thresholds = _parse_thresholds(args.threshold)
    report_dir = Path(args.output) if args.output else est_root

    if (gt_root / "disp_0.png").is_file():
        frames = [(est_root.name, est_root, gt_root)]
    else:
        names = sorted(p.name for p in gt_root.iterdir() if (p / "disp_0.png").is_file())
        if not names:
            raise InputError(f"no frames found in {gt_root}")
        frames = [(n, est_root / n, gt_root / n) for n in names]

    reports = []
    with _stage("eval"):
        for name, est_dir, gt_dir in frames:
            report = evaluate_dirs(est_dir, gt_dir, rule, args.masked, args.domain)
            reports.append(report)
            if len(frames) > 1:
                _write_report(report, report_dir / f"report_{name}")
        total = aggregate(reports)
        _write_report(total, report_dir / "report")
    print(total.to_table().rstrip())
    return _threshold_exit(total, thresholds)


# ---------------------------------------------------------------- stage commands


def cmd_convert(args) -> int:
    calib = kitti_io.read_calibration(args.calib)
    cap = args.depth_cap
    with _stage("convert"):
        if args.to == "disparity":
            depth = kitti_io.read_depth_png(args.input, depth_cap=cap)
            out = _clamp_encodable(depth_to_disparity(depth, calib.camera))
            kitti_io.write_disparity_png(out, args.output)
        else:
            disp = kitti_io.read_disparity_png(args.input)
            depth = disparity_to_depth(disp, calib.camera, depth_cap=cap)
            depth = DepthMap(np.minimum(depth.values, MAX_ENCODABLE), depth.valid, depth_cap=None)
            kitti_io.write_depth_png(depth, args.output)
    return EXIT_OK


def _stage_settings(args) -> PipelineConfig:
    cfg = load_pipeline_config(args.config) if args.config else PipelineConfig()
    if args.jobs is not None:
        cfg = dataclasses.replace(cfg, jobs=args.jobs)
    return cfg


def cmd_warp(args) -> int:
    cfg = _stage_settings(args)
    if getattr(args, "iterations", None) is not None:
        cfg = dataclasses.replace(cfg, morphology_iterations=args.iterations)
    try:
        d1 = kitti_io.read_disparity_png(args.disp_0)
        d2 = kitti_io.read_disparity_png(args.disp_1)
        flow = kitti_io.read_flow_png(args.flow)
    except kitti_io.FormatError as exc:
        raise InputError(str(exc)) from None
    out = Path(args.output)
    with _stage("warp"):
        warp = warp_with_occlusion(
            d1, d2, flow,
            iterations=cfg.morphology_iterations, morphology=cfg.morphology, jobs=cfg.jobs,
        )
        kitti_io.write_disparity_png(warp.warped, out / "disp_1_warped.png")
        kitti_io.write_mask_png(warp.occlusion, warp.out_of_view, out / "occ.png")
    print(f"density {100.0 * warp.density:.2f} %")
    return EXIT_OK


def cmd_interp(args) -> int:
    cfg = _stage_settings(args)
    icfg = cfg.interpolator
    overrides = {
        k: getattr(args, k)
        for k in ("edge_weight", "solver", "neighborhood")
        if getattr(args, k) is not None
    }
    if args.refine:
        overrides["refine"] = True
    if overrides:
        try:
            icfg = dataclasses.replace(icfg, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        sparse = kitti_io.read_disparity_png(args.input)
        guide = kitti_io.read_image(args.image)
        guide = check_guide(guide, sparse.shape)
    except (kitti_io.FormatError, kitti_io.ShapeError) as exc:
        raise InputError(str(exc)) from None
    with _stage("interp"):
        dense = interpolate(sparse, guide, icfg)
        dense = refine_dense(dense, guide, icfg)
        kitti_io.write_disparity_png(_clamp_encodable(dense), args.output)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monocomb",
        description="Scene flow from monocular depth and optical flow.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def eval_flags(p):
        p.add_argument("--rule", choices=[r.value for r in OutlierRule], default=None,
                       help="outlier rule (default: kitti)")
        p.add_argument("--masked", action="store_true",
                       help="score only pixels with an estimate")
        p.add_argument("--threshold", action="append", metavar="KEY=VALUE",
                       help="fail with exit code 3 if the metric exceeds VALUE, "
                            "e.g. SF.all.koe=30 or sum_epe=5")

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="output directory (overrides the config)")
    p.add_argument("--depth-cap", type=float, default=None)
    p.add_argument("--jobs", type=int, default=None)
    eval_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="render a synthetic KITTI-format fixture set")
    p.add_argument("output")
    p.add_argument("--scene", default="two-layer",
                   help="'two-layer', 'kitti-like' or a scene config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fg-flow", type=float, default=30.0)
    p.add_argument("--bg-flow", type=float, default=5.0)
    p.add_argument("--width", type=int, default=1242, help="two-layer scene only")
    p.add_argument("--height", type=int, default=375, help="two-layer scene only")
    p.add_argument("--with-inputs", action="store_true",
                   help="also write depth/flow inputs, calibration and a run.cfg")
    p.add_argument("--flow-noise", type=float, default=0.0,
                   help="uniform noise (px) added to the input flow")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="evaluate estimates against ground truth")
    p.add_argument("estimate", help="directory with disp_0.png, disp_1.png, flow.png")
    p.add_argument("ground_truth", help="ground truth directory (or a directory of frames)")
    p.add_argument("--output", help="report directory (default: the estimate directory)")
    p.add_argument("--domain", choices=["joint", "component"], default="joint")
    eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("convert", help="convert between depth and disparity PNGs")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--calib", required=True)
    p.add_argument("--to", choices=["disparity", "depth"], default="disparity")
    p.add_argument("--depth-cap", type=float, default=100.0)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("warp", help="warp the t2 disparity into the t1 frame")
    p.add_argument("--disp-0", required=True)
    p.add_argument("--disp-1", required=True)
    p.add_argument("--flow", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--config")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("interp", help="fill a sparse disparity map")
    p.add_argument("input")
    p.add_argument("image")
    p.add_argument("output")
    p.add_argument("--edge-weight", type=float, default=None)
    p.add_argument("--solver", choices=["direct", "jacobi"], default=None)
    p.add_argument("--neighborhood", type=int, choices=[4, 8], default=None)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--config")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_interp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MonoCombError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
