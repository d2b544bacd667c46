"""CLI for the embedding exporter. Exit codes: 0 success, 2 input error."""
from __future__ import annotations

import argparse
import sys

from .exporter import DEFAULT_MODEL, ManifestError, ModelResolutionError, export_embeddings


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="said-export", description=__doc__)
    parser.add_argument("--manifest", required=True, help="texts manifest TSV")
    parser.add_argument("--model", default=DEFAULT_MODEL, help="sentence encoder model name")
    parser.add_argument("--out", required=True, help="output SAIDEMB path")
    parser.add_argument("--batch-size", type=int, default=64)
    args = parser.parse_args(argv)
    try:
        count, dim = export_embeddings(args.manifest, args.model, args.out, args.batch_size)
    except (ManifestError, ModelResolutionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} embeddings (dim {dim}) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
