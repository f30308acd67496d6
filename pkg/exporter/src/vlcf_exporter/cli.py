"""vlcf-export: run a backbone over images or captions, write VLCF."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .backbones import IMAGE_BACKBONES
from .export import ExportJob, JobError, export_image_features, export_text_features


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlcf-export")
    sub = parser.add_subparsers(dest="command", required=True)

    images = sub.add_parser("images", help="export image features")
    images.add_argument("--input", required=True, help="image directory")
    images.add_argument(
        "--backbone", required=True, choices=sorted(IMAGE_BACKBONES),
    )
    text = sub.add_parser("text", help="export caption text features (clip-text)")
    text.add_argument("--input", required=True, help="caption CSV")
    text.add_argument("--column", default="caption", help="caption column name")

    for p in (images, text):
        p.add_argument("--output", required=True, help="VLCF output path")
        p.add_argument(
            "--weights", default="pinned", choices=["pinned", "none"],
            help="pinned checkpoint from backbones.lock.json, or seeded random init",
        )
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--batch-size", type=int, default=8)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    job = ExportJob(
        source=Path(args.input),
        backbone=args.backbone if args.command == "images" else "clip-text",
        output=Path(args.output),
        weights=args.weights,
        seed=args.seed,
        batch_size=args.batch_size,
        caption_column=getattr(args, "column", "caption"),
    )
    try:
        if args.command == "images":
            export_image_features(job)
        else:
            export_text_features(job)
        return 0
    except JobError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
