"""Command-line entry point: ``lmbridge export``."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .bridge import DEFAULT_LAYERS, DEFAULT_MODEL_ID, export_attention


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmbridge",
        description="Export word-level LM attention into an attention archive",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    p = sub.add_parser("export", help="one inference pass over a corpus")
    p.add_argument("--corpus", required=True, help="corpus JSON Lines file")
    p.add_argument("--out", required=True, help="output attention archive")
    p.add_argument("--manifest", required=True, help="output manifest JSON")
    p.add_argument("--model", default=DEFAULT_MODEL_ID, help="model id or local path")
    p.add_argument("--layers", type=int, default=DEFAULT_LAYERS, help="export the first L layers")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--device", default="cpu")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = export_attention(
            args.corpus,
            args.out,
            model_id=args.model,
            layers=args.layers,
            manifest_path=args.manifest,
            batch_size=args.batch_size,
            device=args.device,
        )
    except FileNotFoundError as exc:
        print(f"error: path: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"exported {manifest.sentence_count} sentences "
        f"({manifest.truncated_count} truncated, {len(manifest.skipped)} skipped)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
