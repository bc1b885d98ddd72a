"""Command-line entry point for the embedding exporter."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .encoders import get_encoder
from .export import ExportError, export, manifest_path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Encode a source/reply JSONL dataset into a binary "
                    "embedding store with a JSON manifest.")
    parser.add_argument("--data", required=True, help="input JSONL dataset")
    parser.add_argument("--encoder", default="hashed:64",
                        help="encoder id: hashed[:d_model[:seed]] or a "
                             "pretrained model name")
    parser.add_argument("--max-len", type=int, default=50,
                        help="sequence length U (default 50)")
    parser.add_argument("--out", required=True, help="output store path")
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        encoder = get_encoder(args.encoder)
        manifest = export(args.data, encoder, args.max_len, args.out)
    except ExportError as exc:
        print(f"export: {exc}", file=sys.stderr)
        return 3
    if not args.quiet:
        print(f"wrote {manifest['record_count']} records and "
              f"{manifest['word_count']} word vectors to {args.out}")
        print(f"manifest at {manifest_path(args.out)}")
        print(f"content hash {manifest['content_hash']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
