"""CLI: ``plot --spec <file>`` renders the figure described by a YAML spec."""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from .figspec import SpecError, load_spec
from .render import ColumnError, render


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="plot")
    parser.add_argument("--spec", required=True, help="YAML figure spec")
    parser.add_argument("--raw", action="store_true",
                        help="plot raw curves (no smoothing)")
    parser.add_argument("--out", default=None,
                        help="override the spec's output path")
    args = parser.parse_args(argv)

    try:
        spec = load_spec(args.spec)
        if args.raw:
            spec.raw = True
        if args.out:
            spec.output = args.out
        out = render(spec, base_dir=os.path.dirname(os.path.abspath(args.spec)))
    except (SpecError, ColumnError, OSError) as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
