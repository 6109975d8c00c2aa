"""Command line: figstudio plot <kind> --in FILE [--in FILE ...] --out IMAGE."""

from __future__ import annotations

import argparse
import sys

from .io import FormatError
from .plots import PlotJob, PlotKind, render


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValueError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="figstudio", description="Render figures from simulator data files.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("plot", help="render one figure")
    p.add_argument("kind", choices=[k.value for k in PlotKind])
    p.add_argument("--in", dest="inputs", action="append", required=True,
                   help="input data file (repeatable)")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--log-y", action="store_true")
    p.add_argument("--param", choices=("lambda", "n_eff"), default="lambda",
                   help="which fitted parameter a scaling plot shows")
    p.add_argument("--dim", type=int, default=None, help="summary filter: dimension")
    p.add_argument("--kt", type=float, default=None, help="summary filter: temperature")
    p.add_argument("--n", type=int, default=None, help="summary filter: site count")
    p.add_argument("--fit-table", default=None,
                   help="scaling report table supplying the annotated fit line")
    p.add_argument("--title", default=None)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        job = PlotJob(
            kind=PlotKind(args.kind),
            inputs=args.inputs,
            output=args.out,
            log_y=args.log_y,
            parameter=args.param,
            dimension=args.dim,
            kT=args.kt,
            n_sites=args.n,
            fit_table=args.fit_table,
            title=args.title,
        )
        out = render(job)
        print(f"wrote {out}")
        return 0
    except FormatError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
