"""CLI: render sweep figures from simulator CSVs."""

from __future__ import annotations

import argparse

from .render import FigureSpec, plot_sweep


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nomaplot",
        description="Plot mean sum rates with standard-error bars from "
                    "nfnoma result CSVs.")
    parser.add_argument("--in", dest="inputs", required=True, nargs="+",
                        help="input CSV file(s)")
    parser.add_argument("--x", required=True, help="x-axis field, e.g. pdbm or rho")
    parser.add_argument("--series", default="method",
                        help="comma separated fields defining one line each")
    parser.add_argument("--facet", default=None,
                        help="field splitting the data into one image per value")
    parser.add_argument("--y", default="sum_rate")
    parser.add_argument("--xlabel", default=None)
    parser.add_argument("--ylabel", default=None)
    parser.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(inputs=tuple(args.inputs), x=args.x,
                      series=tuple(s.strip() for s in args.series.split(",")),
                      facet=args.facet, out=args.out, y=args.y,
                      x_label=args.xlabel, y_label=args.ylabel)
    for fig in plot_sweep(spec):
        print(f"wrote {fig.path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
