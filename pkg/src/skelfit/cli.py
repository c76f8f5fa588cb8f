"""Command-line surface tying the pipeline together.

Subcommands: init, optimize, synth, eval, sweep, measure, locate, outline.
Exit codes: 0 success, 1 usage error, 2 data error.  Every table output
starts with a '#' header naming columns and units; all results are
deterministic given the inputs and seeds.
"""

from __future__ import annotations

import argparse
import math
import sys
from contextlib import contextmanager
from typing import Optional, Sequence

import numpy as np

from .energy import EnergyParams, ImageGrid, ZeroWeightError, total_energy
from .geometry import DistanceModel, InvalidSkeletonError, dilation_outline
from .initializer import BinaryMask, MaskTooSmallError, build_initial_colony
from .io import (
    FormatError,
    load_image,
    load_params,
    load_points,
    load_skeletons,
    save_image,
    save_skeletons,
)
from .measure import assign_points, localize, measure
from .optimizer import OptimizationError, OptimizeOptions, optimize_eroded
from .synthesis import (
    RenderSettings,
    add_noise,
    evaluate_outlines,
    noise_sweep,
    render_synthetic,
    sweep_table,
)

__all__ = ["main", "run_command"]

_DATA_ERRORS = (
    FormatError,
    InvalidSkeletonError,
    MaskTooSmallError,
    OptimizationError,
    ZeroWeightError,
    ValueError,
    OSError,
)


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="skelfit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init", help="initial skeletons from a binary mask image")
    p.add_argument("--mask", required=True, help="mask image (PGM/PNG; >0.5 = cell)")
    p.add_argument("-o", "--output", required=True, help="skeleton document to write")
    p.add_argument("--spacing", type=float, default=8.0, help="node spacing, px")
    p.add_argument("--angle-tol", type=float, default=15.0,
                   help="vectorization angle tolerance, degrees")

    p = sub.add_parser("optimize", help="fit skeletons to an image")
    p.add_argument("--image", required=True)
    p.add_argument("--init", required=True, help="initial skeleton document")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--params", help="JSON parameter document")
    p.add_argument("--model", choices=["simplified", "oriented"])
    p.add_argument("--trace", help="write per-iteration energy table here")

    p = sub.add_parser("synth", help="render a synthetic image from skeletons")
    p.add_argument("--skeletons", required=True)
    p.add_argument("-o", "--output", required=True, help="image to write (.pgm/.png)")
    p.add_argument("--sigma", type=float, default=0.0, help="noise std, intensity units")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, help="default: from the colony extent")
    p.add_argument("--height", type=int)

    p = sub.add_parser("eval", help="score predicted outlines against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth skeleton document")
    p.add_argument("--pred", required=True, help="predicted skeleton document")
    p.add_argument("-o", "--output", help="report file (default: stdout)")
    p.add_argument("--model", choices=["simplified", "oriented"], default="simplified")

    p = sub.add_parser("sweep", help="noise-robustness sweep on a synthetic colony")
    p.add_argument("--skeletons", required=True, help="ground-truth colony")
    p.add_argument("--sigmas", required=True,
                   help="comma-separated noise standard deviations")
    p.add_argument("-o", "--output", help="table file (default: stdout)")
    p.add_argument("--jitter", type=float, default=2.0, help="init jitter, px")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="JSON parameter document")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)

    p = sub.add_parser("measure", help="shape measurements per cell")
    p.add_argument("--skeletons", required=True)
    p.add_argument("-o", "--output", help="table file (default: stdout)")
    p.add_argument("--scale", type=float, default=1.0,
                   help="unit scale applied to printed lengths")

    p = sub.add_parser("locate", help="points in cell-centered coordinates")
    p.add_argument("--skeletons", required=True)
    p.add_argument("--points", required=True, help="text file of 'x y' lines")
    p.add_argument("-o", "--output", help="table file (default: stdout)")
    p.add_argument("--slack", type=float, default=0.5,
                   help="assignment margin tolerance, px")

    p = sub.add_parser("outline", help="sampled cell outlines")
    p.add_argument("--skeletons", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--model", choices=["simplified", "oriented"], default="simplified")
    p.add_argument("--step", type=float, default=0.5, help="sample spacing, px")

    return parser


@contextmanager
def _open_output(path: Optional[str]):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _load_run_config(args) -> tuple[EnergyParams, OptimizeOptions]:
    if getattr(args, "params", None):
        params, opts = load_params(args.params)
    else:
        params, opts = EnergyParams(), OptimizeOptions()
    if getattr(args, "model", None):
        params = EnergyParams(
            **{
                **{k: getattr(params, k) for k in params.__dataclass_fields__},
                "model": DistanceModel(args.model),
            }
        )
    return params, opts


def _default_canvas(colony) -> tuple[int, int]:
    xs = np.concatenate([s.points[:, 0] for s in colony])
    ys = np.concatenate([s.points[:, 1] for s in colony])
    rmax = max(float(s.radii.max()) for s in colony)
    return (
        int(math.ceil(xs.max() + rmax + 10)),
        int(math.ceil(ys.max() + rmax + 10)),
    )


def _cmd_init(args) -> int:
    img = load_image(args.mask)
    mask = BinaryMask(img.pixels > 0.5)
    colony = build_initial_colony(mask, args.spacing, args.angle_tol)
    save_skeletons(args.output, colony)
    return 0


def _cmd_optimize(args) -> int:
    img = load_image(args.image)
    colony = load_skeletons(args.init)
    if not colony:
        raise FormatError(f"{args.init}: document contains no cells")
    params, opts = _load_run_config(args)
    fitted, trace = optimize_eroded(img, colony, params, opts)
    save_skeletons(args.output, fitted)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write("# iteration\ttotal\tdata\tcurvature\thomogeneity"
                     "\trepulsion\tgrad_max\tstep_px\n")
            for e in trace.entries:
                fh.write(
                    f"{e.iteration}\t{e.total:.9g}\t{e.data:.9g}\t{e.curvature:.9g}"
                    f"\t{e.homogeneity:.9g}\t{e.repulsion:.9g}"
                    f"\t{e.grad_max:.9g}\t{e.step:.9g}\n"
                )
    return 0


def _cmd_synth(args) -> int:
    colony = load_skeletons(args.skeletons)
    if not colony:
        raise FormatError(f"{args.skeletons}: document contains no cells")
    width, height = args.width, args.height
    if width is None or height is None:
        dw, dh = _default_canvas(colony)
        width = width or dw
        height = height or dh
    img = render_synthetic(colony, RenderSettings(width, height))
    if args.sigma > 0:
        img = add_noise(img, args.sigma, args.seed)
    save_image(args.output, img)
    return 0


def _cmd_eval(args) -> int:
    gt = load_skeletons(args.gt)
    pred = load_skeletons(args.pred)
    report = evaluate_outlines(gt, pred, DistanceModel(args.model))
    with _open_output(args.output) as fh:
        fh.write("# cell\thausdorff_px\tmean_px\n")
        for row in report.per_cell:
            fh.write(f"{row.cell}\t{row.hausdorff:.6g}\t{row.mean_symmetric:.6g}\n")
        fh.write(
            f"overall\t{report.hausdorff:.6g}\t{report.mean_symmetric_distance:.6g}\n"
        )
    return 0


def _cmd_sweep(args) -> int:
    colony = load_skeletons(args.skeletons)
    if not colony:
        raise FormatError(f"{args.skeletons}: document contains no cells")
    try:
        sigmas = [float(s) for s in args.sigmas.split(",") if s.strip()]
    except ValueError:
        raise FormatError(f"bad --sigmas list: {args.sigmas!r}") from None
    params, opts = _load_run_config(args)
    width, height = args.width, args.height
    if width is None or height is None:
        dw, dh = _default_canvas(colony)
        width = width or dw
        height = height or dh
    rows = noise_sweep(
        colony, RenderSettings(width, height), sigmas, args.jitter, args.seed,
        params, opts,
    )
    with _open_output(args.output) as fh:
        fh.write(sweep_table(rows))
    return 0


def _cmd_measure(args) -> int:
    colony = load_skeletons(args.skeletons)
    scale = args.scale
    with _open_output(args.output) as fh:
        fh.write("# cell\tlength\twidth\tperimeter\torientation_deg\n")
        for idx, skel in enumerate(colony):
            m = measure(skel)
            fh.write(
                f"{idx}\t{m.length * scale:.6g}\t{m.width * scale:.6g}"
                f"\t{m.perimeter * scale:.6g}\t{m.orientation:.6g}\n"
            )
    return 0


def _cmd_locate(args) -> int:
    colony = load_skeletons(args.skeletons)
    if not colony:
        raise FormatError(f"{args.skeletons}: document contains no cells")
    pts = load_points(args.points)
    owners = assign_points(colony, pts, args.slack)
    with _open_output(args.output) as fh:
        fh.write("# point\tcell\tx_norm\ty_px\n")
        for idx, (p, owner) in enumerate(zip(pts, owners)):
            if owner is None:
                fh.write(f"{idx}\tnone\tnan\tnan\n")
            else:
                coord = localize(colony[owner], p)
                fh.write(f"{idx}\t{owner}\t{coord.x_norm:.6g}\t{coord.y_px:.6g}\n")
    return 0


def _cmd_outline(args) -> int:
    colony = load_skeletons(args.skeletons)
    with _open_output(args.output) as fh:
        fh.write("# cell\tx_px\ty_px\n")
        for idx, skel in enumerate(colony):
            contour = dilation_outline(skel, DistanceModel(args.model), args.step)
            for x, y in contour.points:
                fh.write(f"{idx}\t{x:.6g}\t{y:.6g}\n")
    return 0


_HANDLERS = {
    "init": _cmd_init,
    "optimize": _cmd_optimize,
    "synth": _cmd_synth,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "measure": _cmd_measure,
    "locate": _cmd_locate,
    "outline": _cmd_outline,
}


def run_command(argv: Sequence[str]) -> int:
    """Parse and run one CLI invocation; returns the exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _HANDLERS[args.command](args)
    except _DATA_ERRORS as exc:
        print(f"skelfit {args.command}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))
