"""CLI: extract --images DIR --model NAME --pooling mean|cls --batch 64 --out file.cte"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .extract import POOLINGS, ExtractError, ExtractJob, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Dump per-layer pooled encoder embeddings for an image directory as CTE1.",
    )
    parser.add_argument("--images", required=True, help="directory of images")
    parser.add_argument("--model", required=True, help="encoder name or local path")
    parser.add_argument("--pooling", choices=POOLINGS, default="mean",
                        help="token pooling per layer (default: mean)")
    parser.add_argument("--batch", type=int, default=64, help="inference batch size")
    parser.add_argument("--out", required=True, help="output CTE1 path")
    parser.add_argument("--device", default="cpu", help="torch device tag")
    parser.add_argument("--include-embedding-layer", action="store_true",
                        help="also emit the pre-block embedding output as layer 0")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(sys.argv[1:] if argv is None else list(argv))
    if args.batch < 1:
        print("error: --batch must be >= 1", file=sys.stderr)
        return 1
    job = ExtractJob(
        image_dir=Path(args.images),
        model=args.model,
        output_path=Path(args.out),
        pooling=args.pooling,
        batch_size=args.batch,
        device=args.device,
        include_embedding_layer=args.include_embedding_layer,
    )
    try:
        path = extract(job)
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
