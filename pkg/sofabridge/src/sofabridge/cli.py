"""Command line front end: convert SOFA sets, plot report CSVs.

Exit codes: 0 success, 1 usage, 2 unreadable or inconsistent data.
"""

from __future__ import annotations

import argparse
import sys

from .convert import ConversionError, ConversionSpec, convert
from .plots import ReportFormatError, plot_report


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 on usage; keep that as 1
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="sofa-bridge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="SOFA files or a directory -> bundle")
    p.add_argument("inputs", nargs="+",
                   help=".sofa files (one subject each) or one directory")
    p.add_argument("--out", required=True, help="bundle directory to write")
    p.add_argument("--K", type=int, default=64,
                   help="post-DC frequency bins per ear")
    p.add_argument("--exclude", action="append", default=[], metavar="ID",
                   help="subject id to drop (repeatable)")
    p.add_argument("--mapping", default="spherical",
                   help="source-position convention (only 'spherical')")

    p = sub.add_parser("plot-report", help="report CSV -> scatter figure")
    p.add_argument("csv", help="report CSV as exported by the pipeline")
    p.add_argument("--out", required=True, help="image path (png, pdf, ...)")
    p.add_argument("--zeta", type=float, default=None,
                   help="re-threshold rows on lsd_db instead of the "
                        "stored flags")
    return parser


def entry(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "convert":
            out = convert(ConversionSpec(
                inputs=tuple(args.inputs), out=args.out, K=args.K,
                exclude=tuple(args.exclude), mapping=args.mapping,
            ))
            print(f"bundle: {out}")
        else:
            plot_report(args.csv, args.out, zeta=args.zeta)
            print(f"figure: {args.out}")
    except (ConversionError, ReportFormatError, FileNotFoundError,
            OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(entry())
