"""plotkit CLI: render one figure kind from a run directory (or explicit
table paths). Schema violations exit nonzero with a JSON error line."""

import argparse
import json
import sys
from pathlib import Path

from .render import FIGURE_KINDS, DEFAULT_INPUTS, FigureSpec, render
from .schema import SchemaError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="render figures from simulator metric tables")
    parser.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    parser.add_argument("--input", required=True,
                        help="run directory, or a table file path")
    parser.add_argument("--extra-input", action="append", default=[],
                        help="additional table of the same schema "
                             "(e.g. the sharing operating point for the "
                             "tradeoff figure); repeatable")
    parser.add_argument("--output", required=True, help="figure file path")
    parser.add_argument("--title", default=None)
    return parser


def resolve_inputs(kind, input_path):
    path = Path(input_path)
    if path.is_dir():
        return [str(path / name) for name in DEFAULT_INPUTS[kind]]
    return [str(path)]


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            kind=args.kind,
            inputs=resolve_inputs(args.kind, args.input),
            extra_inputs=list(args.extra_input),
            output=args.output,
            title=args.title,
        )
        out = render(spec)
    except (SchemaError, OSError) as exc:
        sys.stderr.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
