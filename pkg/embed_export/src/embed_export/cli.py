"""Command line for the embedding bridge.

    embed-export --corpus raw.jsonl --model bert-base-uncased --out table.bin

writes table.bin plus table.bin.manifest.jsonl, ready for the summarizer's
--embeddings flag. Exit codes: 0 success, 1 usage, 2 data error, 3 encoder or
write failure.
"""

import argparse
import sys

from .corpus import CorpusError
from .exporter import EncoderUnavailable, WriteFailure, export


def build_parser():
    parser = argparse.ArgumentParser(prog="embed-export", description=__doc__)
    parser.add_argument("--corpus", required=True, help="transcript JSONL")
    parser.add_argument("--model", required=True, help="encoder name or local path")
    parser.add_argument("--out", required=True, help="binary table output path")
    parser.add_argument("--manifest", help="manifest path (default: <out>.manifest.jsonl)")
    parser.add_argument("--filtered", action="store_true",
                        help="keep only utterances with more than 5 words")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--max-tokens", type=int, default=64)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        n, h, manifest = export(
            args.corpus,
            args.model,
            args.out,
            manifest_path=args.manifest,
            filtered=args.filtered,
            batch_size=args.batch_size,
            max_tokens=args.max_tokens,
        )
    except (CorpusError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (EncoderUnavailable, WriteFailure) as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {n} x {h} table to {args.out} (manifest: {manifest})", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
