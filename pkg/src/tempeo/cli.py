"""Command-line entry point: ``tempeo {mask,pose,loss,eval}``.

stdout carries TAB-separated results; diagnostics go to stderr.
Exit codes: 0 ok, 2 I/O or format error, 3 dimension mismatch, 4 empty support,
64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import dataio, losses
from .ddvo import SolverConfig, refine_pose
from .errors import NoSupportError, SizeError, TempeoError
from .evaluation import METRICS, REGIONS, EvalOptions, evaluate_split, report_row, write_report_csv
from .geometry import Pose
from .imagery import ScalarMap
from .movemask import make_moving_mask, moving_fraction, residual_flow, static_weight

EXIT_OK = 0
EXIT_IO = 2
EXIT_SIZE = 3
EXIT_EMPTY = 4
EXIT_USAGE = 64

log = logging.getLogger("tempeo")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(*fields) -> None:
    print("\t".join(str(f) for f in fields))


# -- mask ------------------------------------------------------------------------


def cmd_mask(args) -> int:
    flow = dataio.read_flow_flo(args.flow)
    depth = dataio.read_depth(args.depth, args.depth_format)
    pose = dataio.read_pose_record(args.pose)
    k = dataio.read_calib(args.calib, args.calib_key)
    instances = dataio.read_instances(args.instances) if args.instances else None
    if flow.shape != depth.shape:
        raise SizeError(f"{args.flow} is {flow.shape}, {args.depth} is {depth.shape}")
    if instances is not None and instances.shape != depth.shape:
        raise SizeError(f"{args.instances} is {instances.shape}, {args.depth} is {depth.shape}")
    residual = residual_flow(flow, depth, pose, k)
    mask = make_moving_mask(residual, instances, args.threshold_px, args.instance_fraction)
    dataio.write_mask_png(args.out, mask)
    _emit("moving_fraction", repr(moving_fraction(mask)))
    return EXIT_OK


# -- pose ------------------------------------------------------------------------


def cmd_pose(args) -> int:
    frame_t = dataio.read_image(args.frame_t)
    frame_t1 = dataio.read_image(args.frame_t1)
    depth = dataio.read_depth(args.depth, args.depth_format)
    k = dataio.read_calib(args.calib, args.calib_key)
    init = dataio.read_pose_record(args.init) if args.init else Pose.identity()
    weight = None
    if args.mask:
        weight = static_weight(dataio.read_probability(args.mask))
    for path, raster in ((args.frame_t1, frame_t1), (args.depth, depth)):
        if raster.shape != frame_t.shape:
            raise SizeError(f"{path} is {raster.shape}, {args.frame_t} is {frame_t.shape}")
    if weight is not None and weight.shape != frame_t.shape:
        raise SizeError(f"{args.mask} is {weight.shape}, {args.frame_t} is {frame_t.shape}")
    cfg = SolverConfig(
        max_iterations=args.max_iterations,
        levels=args.levels,
        tolerance=args.tolerance,
        lambda0=args.lambda0,
        huber_delta=args.huber_delta,
    )
    pose, trace = refine_pose(frame_t, frame_t1, depth, init, weight, k, cfg)
    dataio.write_pose_record(args.out, pose)
    if args.trace:
        with open(args.trace, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(trace.to_csv_rows())
    _emit("pose", dataio.format_pose_record(pose))
    _emit("termination", trace.termination)
    return EXIT_OK


# -- loss ------------------------------------------------------------------------

LOSS_INPUTS = {
    "rtc": ("frame_t", "frame_t1", "depth", "pose", "calib"),
    "stc": ("translated_t", "translated_t1", "flow"),
    "syn": ("pred_depth", "gt_depth"),
    "seg": ("pred_prob", "gt_mask"),
    "ssim": ("ssim_a", "ssim_b"),
}


def _moving_to_weight(path, shape) -> ScalarMap:
    if path is None:
        return ScalarMap(np.ones(shape), "probability")
    return static_weight(dataio.read_probability(path))


def _compute_loss(name: str, args) -> losses.LossValue:
    gray = not args.color
    if name == "rtc":
        ft, ft1 = dataio.read_image(args.frame_t), dataio.read_image(args.frame_t1)
        depth = dataio.read_depth(args.depth, args.depth_format)
        pose = dataio.read_pose_record(args.pose)
        k = dataio.read_calib(args.calib, args.calib_key)
        m0 = _moving_to_weight(args.moving_t, ft.shape)
        m1 = _moving_to_weight(args.moving_t1, ft.shape)
        return losses.robust_temporal_loss(ft, ft1, depth, pose, m0, m1, k, gray)
    if name == "stc":
        a, b = dataio.read_image(args.translated_t), dataio.read_image(args.translated_t1)
        return losses.synthetic_temporal_loss(a, b, dataio.read_flow_flo(args.flow), gray)
    if name == "syn":
        pred = dataio.normalize_depth(dataio.read_depth(args.pred_depth, args.depth_format))
        gt = dataio.normalize_depth(dataio.read_depth(args.gt_depth, args.depth_format))
        return losses.depth_l1(pred, gt)
    if name == "seg":
        pred = dataio.read_probability(args.pred_prob)
        gt = dataio.read_probability(args.gt_mask)
        return losses.moving_seg_loss(pred, gt, args.seg_mode)
    a, b = dataio.read_image(args.ssim_a), dataio.read_image(args.ssim_b)
    return losses.ssim_loss(a, b, gray)


def cmd_loss(args) -> int:
    selected = [name for name in LOSS_INPUTS if getattr(args, name)]
    if not selected:
        raise UsageError("select at least one of --rtc --stc --syn --seg --ssim")
    for name in selected:
        missing = [f"--{f.replace('_', '-')}" for f in LOSS_INPUTS[name] if getattr(args, f) is None]
        if missing:
            raise UsageError(f"--{name} needs {' '.join(missing)}")
    weights = {name: getattr(args, f"w_{name}") for name in selected}
    if args.total:
        missing = [f"--w-{n}" for n, w in weights.items() if w is None]
        if missing:
            raise UsageError(f"--total needs explicit weights: {' '.join(missing)}")

    values = {}
    for name in selected:
        values[name] = _compute_loss(name, args)
        _emit(name, repr(values[name].value), values[name].valid_pixel_count)
    if args.total:
        total = sum(weights[n] * values[n].value for n in selected)
        _emit("total", repr(total), sum(v.valid_pixel_count for v in values.values()))
    return EXIT_OK


# -- eval ------------------------------------------------------------------------


def cmd_eval(args) -> int:
    opts = EvalOptions(
        cap=args.cap,
        median_scale=args.median_scale,
        crop=args.crop,
        regions=args.regions,
        pred_format=args.pred_format,
        gt_format=args.gt_format,
    )
    result = evaluate_split(args.manifest, opts)
    for name, err in result.errors:
        print(f"error\t{name}\t{err}", file=sys.stderr)
    if not result.frames:
        print(f"{args.manifest}: no frame could be evaluated", file=sys.stderr)
        return EXIT_IO
    if args.out_csv:
        write_report_csv(args.out_csv, result)
    if opts.regions:
        _emit("region", "frame", *METRICS, "pixel_count")
        for region in REGIONS:
            _emit(region, *report_row("MEAN", result.mean[region]))
    else:
        _emit("frame", *METRICS, "pixel_count")
        _emit(*report_row("MEAN", result.mean))
    _emit("frames", result.frame_count, "failed", len(result.errors))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def _add_geometry_inputs(p):
    p.add_argument("--depth", help="frame-t depth (.png or .npy)")
    p.add_argument("--depth-format", choices=("kitti", "vkitti", "npy"), default=None,
                   help="depth encoding (default: npy for .npy files, else kitti PNG)")
    p.add_argument("--calib", help="KITTI-style calibration text with a 3x4 projection row")
    p.add_argument("--calib-key", default=None, help="projection key, e.g. P2 or P_rect_02")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tempeo", description="Depth, pose and mask tools for monocular video.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mask", help="moving-object mask from ground-truth flow, depth and pose")
    p.add_argument("--flow", required=True, help="forward optical flow t->t+1 (.flo)")
    _add_geometry_inputs(p)
    p.add_argument("--pose", required=True, help="12-float [R|t] record, frame t -> t+1")
    p.add_argument("--instances", help="instance-id map (.png or .npy, 0 = background)")
    p.add_argument("--threshold-px", type=float, default=1.0)
    p.add_argument("--instance-fraction", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output mask PNG (255 = moving)")
    p.set_defaults(func=cmd_mask, required_geometry=True)

    p = sub.add_parser("pose", help="refine a relative pose by direct photometric alignment")
    p.add_argument("--frame-t", required=True)
    p.add_argument("--frame-t1", required=True)
    _add_geometry_inputs(p)
    p.add_argument("--init", help="initial pose record (default identity)")
    p.add_argument("--mask", help="moving mask / probability for frame t (255 or 1 = moving)")
    defaults = SolverConfig()
    p.add_argument("--levels", type=int, default=defaults.levels)
    p.add_argument("--max-iterations", type=int, default=defaults.max_iterations)
    p.add_argument("--tolerance", type=float, default=defaults.tolerance)
    p.add_argument("--lambda0", type=float, default=defaults.lambda0)
    p.add_argument("--huber-delta", type=float, default=defaults.huber_delta)
    p.add_argument("--out", required=True, help="output pose record")
    p.add_argument("--trace", help="optional solver trace CSV")
    p.set_defaults(func=cmd_pose, required_geometry=True)

    p = sub.add_parser("loss", help="evaluate training losses on files")
    for name, text in (("rtc", "robust temporal consistency"), ("stc", "synthetic temporal consistency"),
                       ("syn", "synthetic depth L1"), ("seg", "moving segmentation"), ("ssim", "SSIM")):
        p.add_argument(f"--{name}", action="store_true", help=f"compute the {text} loss")
        p.add_argument(f"--w-{name}", type=float, default=None, help=f"weight of --{name} in --total")
    p.add_argument("--total", action="store_true", help="also print the weighted total")
    p.add_argument("--color", action="store_true", help="compare RGB instead of luma")
    p.add_argument("--frame-t")
    p.add_argument("--frame-t1")
    _add_geometry_inputs(p)
    p.add_argument("--pose")
    p.add_argument("--moving-t", help="moving probability for frame t (default all static)")
    p.add_argument("--moving-t1", help="moving probability for frame t+1")
    p.add_argument("--translated-t")
    p.add_argument("--translated-t1")
    p.add_argument("--flow", help="backward flow on the frame-t+1 grid (.flo)")
    p.add_argument("--pred-depth")
    p.add_argument("--gt-depth")
    p.add_argument("--pred-prob")
    p.add_argument("--gt-mask")
    p.add_argument("--seg-mode", choices=losses.SEG_MODES, default="bce")
    p.add_argument("--ssim-a")
    p.add_argument("--ssim-b")
    p.set_defaults(func=cmd_loss, required_geometry=False)

    p = sub.add_parser("eval", help="depth metrics over a manifest of prediction/gt pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--cap", type=float, choices=(80.0, 50.0, 70.0), required=True)
    scale = p.add_mutually_exclusive_group(required=True)
    scale.add_argument("--median-scale", dest="median_scale", action="store_true")
    scale.add_argument("--no-median-scale", dest="median_scale", action="store_false")
    p.add_argument("--crop", nargs="?", const="garg", default=None,
                   choices=("garg", "eigen", "center", "none"))
    p.add_argument("--regions", action="store_true",
                   help="third manifest column is a moving-region mask; report static/moving/all")
    p.add_argument("--pred-format", choices=("kitti", "vkitti", "npy"), default=None)
    p.add_argument("--gt-format", choices=("kitti", "vkitti", "npy"), default=None)
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_eval, required_geometry=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.required_geometry:
        missing = [f"--{f}" for f in ("depth", "calib") if getattr(args, f) is None]
        if missing:
            parser.error(f"{args.command} requires {' '.join(missing)}")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except SizeError as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except NoSupportError as exc:
        print(f"empty support: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (TempeoError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
