"""Command-line entry: plots --csv <path> --kind <figure_kind> --out <path>."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_KINDS, FigureSpec, PlotError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="render a conewalk CSV into a figure")
    parser.add_argument("--csv", required=True, help="input CSV path")
    parser.add_argument("--kind", required=True, choices=sorted(FIGURE_KINDS),
                        help="figure kind")
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    try:
        out = render(FigureSpec(args.csv, args.kind, args.out))
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
