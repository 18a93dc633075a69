"""dsexport command line: export benchmarks into the binary dataset format.

  dsexport export <name> --out DIR [--raw-dir DIR] [--verify] [--no-row-normalize]
  dsexport verify DIR
"""

from __future__ import annotations

import argparse
import sys

from . import format as fmt
from .export import ExportError, SUPPORTED, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dsexport")
    sub = parser.add_subparsers(dest="command", required=True)

    p_export = sub.add_parser("export")
    p_export.add_argument("name", choices=SUPPORTED)
    p_export.add_argument("--out", required=True)
    p_export.add_argument("--raw-dir", default=None)
    p_export.add_argument("--verify", action="store_true")
    p_export.add_argument("--no-row-normalize", action="store_true")

    p_verify = sub.add_parser("verify")
    p_verify.add_argument("directory")

    args = parser.parse_args(argv)
    if args.command == "verify":
        problems: list[str] = []
        if fmt.verify(args.directory, problems):
            print("ok")
            return 0
        for problem in problems:
            print(problem, file=sys.stderr)
        return 1

    try:
        manifest = export(args.name, args.out, raw_dir=args.raw_dir,
                          row_normalize=not args.no_row_normalize,
                          verify_after=args.verify)
    except ExportError as e:
        print(f"export failed: {e}", file=sys.stderr)
        return 1
    counts = manifest.counts
    print(f"{args.name}: {counts['nodes']} nodes, {counts['stored_entries']} stored "
          f"edge entries ({counts['raw_pairs']} raw pairs), {counts['classes']} classes, "
          f"splits {counts['train']}/{counts['val']}/{counts['test']} -> {args.out}")
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
