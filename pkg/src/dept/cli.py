"""Command-line entry point: ``dept <subcommand> ...``.

Exit codes: 0 success, 1 input error, 2 partial or event failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .atomic import atomic_write_bytes
from .fgpem import (
    EmptyMaskError,
    FgpemOptions,
    count_components,
    extract_extreme_points,
    fgpem_generate,
    load_points,
)
from .metrics import evaluate_dataset
from .preprocess import DEFAULT_CLIP_LIMIT, DEFAULT_EPSILON, DEFAULT_TILES
from .raster import RasterError, as_mask, read_f32_raster, read_raster, write_mask, write_rgb_png
from .refine import (
    DEFAULT_SHARPNESS,
    SessionError,
    load_config,
    open_session,
    plan_schedule,
    run_refinement,
)

LOGGER = logging.getLogger("dept")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_PARTIAL = 2


class InputError(Exception):
    pass


# ---------------------------------------------------------------------
# extract-points
# ---------------------------------------------------------------------
def _points_document(mask_path: Path) -> dict:
    mask = read_raster(mask_path, "mask")
    pts = extract_extreme_points(mask)
    doc = pts.to_json()
    n = count_components(mask)
    if n > 1:
        LOGGER.warning("%s: %d foreground components; using extremes of their union", mask_path, n)
        doc["components"] = n
    return doc


def _write_json(doc: dict, path: Path) -> None:
    atomic_write_bytes(path, (json.dumps(doc, sort_keys=False) + "\n").encode("utf-8"))


def cmd_extract_points(args: argparse.Namespace) -> int:
    if args.mask_dir is not None:
        if args.out_dir is None:
            raise InputError("--mask-dir requires --out-dir")
        if not args.mask_dir.is_dir():
            raise InputError(f"not a directory: {args.mask_dir}")
        masks = sorted(p for p in args.mask_dir.iterdir() if p.suffix.lower() in (".png", ".pgm"))
        if not masks:
            raise InputError(f"no masks in {args.mask_dir}")
        failed = 0
        for m in masks:
            try:
                _write_json(_points_document(m), args.out_dir / f"{m.stem}.json")
                print(f"{m.name}: ok")
            except (RasterError, EmptyMaskError) as exc:
                failed += 1
                print(f"{m.name}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL if failed else EXIT_OK
    if args.mask is None or args.out is None:
        raise InputError("give --mask and --out, or --mask-dir and --out-dir")
    _write_json(_points_document(args.mask), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------
# gen-label
# ---------------------------------------------------------------------
def _options(args: argparse.Namespace, **extra) -> FgpemOptions:
    return FgpemOptions(
        scale=args.scale,
        epsilon=args.epsilon,
        normalize=not args.no_normalize,
        clip_limit=args.clip_limit,
        tiles=tuple(args.tiles),
        **extra,
    )


def cmd_gen_label(args: argparse.Namespace) -> int:
    try:
        pts = load_points(args.points)
    except (OSError, ValueError) as exc:
        raise InputError(f"{args.points}: {exc}") from exc
    opts = _options(args, use_straight_baseline=args.straight)
    if args.feature is not None:
        source = read_f32_raster(args.feature)
        apply_clahe = False
    else:
        source = read_raster(args.image, "image")
        apply_clahe = args.clahe
    try:
        label = fgpem_generate(source, pts, opts, apply_clahe=apply_clahe)
    except IndexError as exc:
        raise InputError(str(exc)) from exc
    write_mask(label, args.out)
    print(f"wrote {args.out} ({int(label.sum())} foreground pixels)")
    return EXIT_OK


# ---------------------------------------------------------------------
# refine
# ---------------------------------------------------------------------
def cmd_refine(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
        if args.total_epochs is not None:
            cfg.total_epochs = args.total_epochs
        if args.interval is not None:
            cfg.interval = args.interval
        schedule = plan_schedule(cfg.total_epochs, cfg.interval)
        session = open_session(cfg)
    except (SessionError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    if session.current_version > 0:
        raise InputError(f"{session.manifest_path} already has recorded events; use a fresh labels_dir")
    print(f"schedule N={schedule.total_epochs} n={schedule.interval}: epochs {list(schedule.update_epochs)}")
    provider = "surrogate" if args.surrogate else "files"
    try:
        report = run_refinement(session, schedule, provider=provider, sharpness=args.sharpness)
    except SessionError as exc:
        print(f"session failure: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_PARTIAL


# ---------------------------------------------------------------------
# eval / overlay
# ---------------------------------------------------------------------
def cmd_eval(args: argparse.Namespace) -> int:
    for d in (args.pred, args.gt):
        if not d.is_dir():
            raise InputError(f"not a directory: {d}")
    try:
        report = evaluate_dataset(args.pred, args.gt)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if args.report is not None:
        atomic_write_bytes(args.report, report.to_csv().encode("utf-8"))
    print(f"mIoU {report.mean_iou:.6f}  mDice {report.mean_dice:.6f}  ({len(report.rows)} images)")
    for name, msg in sorted(report.failures.items()):
        print(f"FAILED {name}: {msg}", file=sys.stderr)
    return EXIT_PARTIAL if report.failures else EXIT_OK


def boundary(mask) -> np.ndarray:
    """Foreground pixels with at least one background 4-neighbour (outside counts as background)."""
    m = as_mask(mask).astype(bool)
    p = np.pad(m, 1, constant_values=False)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return m & ~interior


def render_overlay(image, label, gt=None) -> np.ndarray:
    """RGB overlay: label boundary in red, ground-truth boundary in green.

    Where both boundaries coincide the pixel is yellow (red and green channels
    both saturated, blue cleared).
    """
    gray = np.floor(np.asarray(image) * 255.0 + 0.5).astype(np.uint8)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    lb = boundary(label)
    gb = boundary(gt) if gt is not None else np.zeros_like(lb)
    edge = lb | gb
    rgb[edge] = 0
    rgb[lb, 0] = 255
    rgb[gb, 1] = 255
    return rgb


def cmd_overlay(args: argparse.Namespace) -> int:
    image = read_raster(args.image, "image")
    label = read_raster(args.label, "mask")
    gt = read_raster(args.gt, "mask") if args.gt is not None else None
    for name, m in (("label", label), ("gt", gt)):
        if m is not None and m.shape != image.shape:
            raise InputError(f"{name} shape {m.shape} does not match image {image.shape}")
    write_rgb_png(render_overlay(image, label, gt), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------
def _add_fgpem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", type=float, default=0.5, help="downsampling factor for tracing, in (0, 1]")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="cost = 1 / (gradient + epsilon)")
    p.add_argument("--no-normalize", action="store_true", help="skip max-normalization of the gradient magnitude")
    p.add_argument("--clip-limit", type=float, default=DEFAULT_CLIP_LIMIT, help="CLAHE clip limit")
    p.add_argument("--tiles", type=int, nargs=2, default=list(DEFAULT_TILES), metavar=("ROWS", "COLS"), help="CLAHE tile grid")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dept",
        description="Pseudo labels from four extreme points via minimum-cost contour tracing.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("extract-points", help="extreme points JSON from a binary mask", formatter_class=fmt)
    p.add_argument("--mask", type=Path, help="binary mask (PNG/PGM, values 0/255)")
    p.add_argument("--out", type=Path, help="output points JSON")
    p.add_argument("--mask-dir", type=Path, help="batch mode: folder of masks")
    p.add_argument("--out-dir", type=Path, help="batch mode: folder for <stem>.json outputs")
    p.set_defaults(func=cmd_extract_points)

    p = sub.add_parser("gen-label", help="pseudo label from an image or feature map", formatter_class=fmt)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image", type=Path, help="8-bit grayscale image (PNG/PGM)")
    src.add_argument("--feature", type=Path, help="feature map (.f32r); disables CLAHE")
    p.add_argument("--points", type=Path, required=True, help="extreme points JSON")
    p.add_argument("--out", type=Path, required=True, help="output label PNG/PGM")
    p.add_argument("--straight", action="store_true", help="straight-line baseline instead of minimum-cost paths")
    p.add_argument("--clahe", action=argparse.BooleanOptionalAction, default=True, help="CLAHE before tracing (images only)")
    _add_fgpem_flags(p)
    p.set_defaults(func=cmd_gen_label)

    p = sub.add_parser("refine", help="run the periodic label refinement schedule", formatter_class=fmt)
    p.add_argument("--config", type=Path, required=True, help="session config JSON")
    p.add_argument("--surrogate", action="store_true", help="generate feature maps by blurring current labels")
    p.add_argument("--sharpness", type=float, nargs="+", default=list(DEFAULT_SHARPNESS), help="surrogate blur std per feature event")
    p.add_argument("--total-epochs", type=int, help="override N from the config")
    p.add_argument("--interval", type=int, help="override n from the config")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("eval", help="per-image IoU/Dice and their means", formatter_class=fmt)
    p.add_argument("--pred", type=Path, required=True, help="folder of predicted masks")
    p.add_argument("--gt", type=Path, required=True, help="folder of ground-truth masks")
    p.add_argument("--report", type=Path, help="CSV report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("overlay", help="draw label (red) and ground-truth (green) boundaries", formatter_class=fmt)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--label", type=Path, required=True)
    p.add_argument("--gt", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output RGB PNG")
    p.set_defaults(func=cmd_overlay)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
