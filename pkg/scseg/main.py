from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from scseg.dct_basis import build_basis, format_basis, scale_basis
from scseg.errors import InvalidArgumentError, SegmentationError
from scseg.evaluation import evaluate_dataset, pair_directories
from scseg.image_io import load_image, save_gray, save_mask
from scseg.segmenter import BlockPath, BlockSegmenter, LambdaKind, LambdaRule, Segmentation, SegmenterConfig
from scseg.synthetic import SyntheticStyle, make_screen_image

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

DEFAULTS = SegmenterConfig()


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be a non-negative integer, got {value}")
    return value


def _segmenter_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("segmentation parameters")
    group.add_argument("--block-size", type=int, default=DEFAULTS.n, help="block side N (default %(default)s)")
    group.add_argument("--bases", type=int, default=DEFAULTS.k, help="number of DCT bases K (default %(default)s)")
    group.add_argument("--q", type=float, default=DEFAULTS.q, help="basis weight q (default %(default)s)")
    group.add_argument("--eps1", type=float, default=DEFAULTS.eps1, help="per-pixel background threshold (default %(default)s)")
    group.add_argument("--eps2", type=float, default=DEFAULTS.eps2, help="flat block colour tolerance (default %(default)s)")
    group.add_argument("--eps3", type=float, default=DEFAULTS.eps3, help="least-squares max error (default %(default)s)")
    group.add_argument("--lambda", dest="lam", type=float, default=None, help="fixed L1 weight; overrides the relative rule")
    group.add_argument(
        "--lambda-factor", type=float, default=DEFAULTS.lambda_rule.value,
        help="factor of the relative L1 weight rule (default %(default)s)",
    )
    group.add_argument(
        "--lambda-rule", choices=[LambdaKind.RELATIVE, LambdaKind.CORRELATION], default=LambdaKind.RELATIVE,
        help="relative: factor x max|f|; correlation: factor x max|G^T f| (default %(default)s)",
    )
    group.add_argument("--rho", type=float, default=DEFAULTS.rho, help="ADMM penalty (default %(default)s)")
    group.add_argument("--iters", type=int, default=DEFAULTS.iterations, help="ADMM iterations (default %(default)s)")
    group.add_argument("--workers", type=_non_negative_int, default=DEFAULTS.workers, help="parallel blocks, 0 = automatic (default %(default)s)")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scseg",
        description="Background/foreground segmentation of screen content images.",
        epilog="Masks are binary PGM files: foreground 255, background 0.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    commands = parser.add_subparsers(dest="command", required=True)
    options = _segmenter_options()

    segment = commands.add_parser("segment", parents=[options], help="write a foreground mask")
    segment.add_argument("--input", required=True, type=Path)
    segment.add_argument("--output", required=True, type=Path, help="mask file (.pgm)")
    segment.set_defaults(handler=run_segment)

    decompose = commands.add_parser("decompose", parents=[options], help="write smooth and sparse layers")
    decompose.add_argument("--input", required=True, type=Path)
    decompose.add_argument("--smooth-out", required=True, type=Path)
    decompose.add_argument("--sparse-out", required=True, type=Path)
    decompose.set_defaults(handler=run_decompose)

    evaluate = commands.add_parser("eval", help="precision and recall against ground truth")
    evaluate.add_argument("--pred-dir", required=True, type=Path)
    evaluate.add_argument("--truth-dir", required=True, type=Path)
    evaluate.add_argument("--json", action="store_true", help="emit a JSON document instead of CSV")
    evaluate.add_argument("--workers", type=_non_negative_int, default=1, help="parallel pairs, 0 = automatic")
    evaluate.set_defaults(handler=run_eval)

    synth = commands.add_parser("synth", help="generate synthetic images with truth masks")
    synth.add_argument("--output-dir", required=True, type=Path)
    synth.add_argument("--count", type=_non_negative_int, default=20)
    synth.add_argument("--size", type=int, default=SyntheticStyle.size)
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(handler=run_synth)

    dump = commands.add_parser("basis-dump", help="print the DCT basis matrix")
    dump.add_argument("--block-size", type=int, default=DEFAULTS.n)
    dump.add_argument("--bases", type=int, default=DEFAULTS.k)
    dump.add_argument("--q", type=float, default=None, help="dump the 1/q scaled basis")
    dump.add_argument("--output", type=Path, default=None)
    dump.set_defaults(handler=run_basis_dump)

    return parser


def config_from_args(args: argparse.Namespace) -> SegmenterConfig:
    if args.lam is not None:
        rule = LambdaRule.absolute(args.lam)
    else:
        rule = LambdaRule(LambdaKind(args.lambda_rule), args.lambda_factor)
    config = SegmenterConfig(
        n=args.block_size,
        k=args.bases,
        q=args.q,
        eps1=args.eps1,
        eps2=args.eps2,
        eps3=args.eps3,
        lambda_rule=rule,
        rho=args.rho,
        iterations=args.iters,
        workers=args.workers,
    )
    config.validate()
    return config


def _report_paths(segmentation: Segmentation) -> None:
    counts = segmentation.counts
    print(
        f"flat: {counts[BlockPath.FLAT]}, "
        f"ls: {counts[BlockPath.LEAST_SQUARES]}, "
        f"sparse: {counts[BlockPath.SPARSE]}"
    )


def run_segment(args: argparse.Namespace, config: SegmenterConfig) -> int:
    image = load_image(args.input)
    segmentation = BlockSegmenter(config).segment(image)
    save_mask(args.output, segmentation.mask)
    _report_paths(segmentation)
    return EXIT_OK


def run_decompose(args: argparse.Namespace, config: SegmenterConfig) -> int:
    image = load_image(args.input)
    segmentation = BlockSegmenter(config).segment(image)
    smooth, sparse = segmentation.layers()
    save_gray(args.smooth_out, smooth)
    save_gray(args.sparse_out, sparse)
    _report_paths(segmentation)
    return EXIT_OK


def run_eval(args: argparse.Namespace) -> int:
    report = evaluate_dataset(pair_directories(args.pred_dir, args.truth_dir), workers=args.workers)
    sys.stdout.write(report.to_json() + "\n" if args.json else report.to_csv())
    return EXIT_OK


def run_synth(args: argparse.Namespace) -> int:
    rng = np.random.default_rng(args.seed)
    style = SyntheticStyle(size=args.size)
    truth_dir = args.output_dir / "truth"
    truth_dir.mkdir(parents=True, exist_ok=True)
    for index in range(args.count):
        image, truth = make_screen_image(rng, style)
        name = f"{index:03d}.pgm"
        save_gray(args.output_dir / name, image.data)
        save_mask(truth_dir / name, truth)
    logger.info("Wrote %d synthetic images to %s", args.count, args.output_dir)
    return EXIT_OK


def run_basis_dump(args: argparse.Namespace) -> int:
    basis = build_basis(args.block_size, args.bases)
    text = format_basis(scale_basis(basis, args.q) if args.q is not None else basis)
    if args.output is None:
        sys.stdout.write(text)
    else:
        args.output.write_text(text)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    try:
        if args.handler in (run_segment, run_decompose):
            try:
                config = config_from_args(args)
            except InvalidArgumentError as e:
                parser.print_usage(sys.stderr)
                print(f"scseg {args.command}: error: {e}", file=sys.stderr)
                return EXIT_USAGE
            return args.handler(args, config)
        return args.handler(args)
    except (SegmentationError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"scseg {args.command}: error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
