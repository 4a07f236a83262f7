"""``extract`` command: pretrained backbone + image folders -> bank file."""

from __future__ import annotations

import argparse
import sys

from .backbones import FEATURE_DIMS
from .extract import ExtractionJob, run_extraction


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Export per-class image embeddings into an embedding-bank file",
    )
    parser.add_argument("--backbone", required=True, choices=sorted(FEATURE_DIMS))
    parser.add_argument(
        "--checkpoint", default=None, help="pretrained weights (torch backbones)"
    )
    parser.add_argument(
        "--data-root", required=True, help="dataset root: root[/split]/class_name/*.png"
    )
    parser.add_argument("--split", default=None, help="optional split subfolder")
    parser.add_argument("--out", required=True, help="bank file to write")
    parser.add_argument("--format", choices=("binary", "csv"), default="binary")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--device", default="cpu", help="torch device hint")
    parser.add_argument("--image-size", type=int, default=84)
    parser.add_argument(
        "--no-normalize",
        action="store_true",
        help="skip ImageNet mean/std normalization of inputs",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    job = ExtractionJob(
        backbone=args.backbone,
        checkpoint=args.checkpoint,
        data_root=args.data_root,
        out_path=args.out,
        split=args.split,
        batch_size=args.batch_size,
        device=args.device,
        image_size=args.image_size,
        normalize=not args.no_normalize,
        out_format=args.format,
    )
    try:
        summary = run_extraction(job)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"extraction failed: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {summary['vectors']} vectors ({summary['classes']} classes, "
        f"dim {summary['dim']}) to {summary['out_path']}",
        file=sys.stderr,
    )
    return 0


def run() -> None:
    raise SystemExit(main())
