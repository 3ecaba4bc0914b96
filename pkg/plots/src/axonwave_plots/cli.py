"""Command line front end: plot <panel-kind> --in DIR --out FILE.png."""

from __future__ import annotations

import argparse
import sys

from .formats import PlotInputError
from .render import (
    render_cylinder_heatmap,
    render_distance_series,
    render_profile_panel,
    render_spectrum_scatter,
)

KINDS = ("cylinder_heatmap", "profile_panel", "spectrum_scatter", "distance_series")


def _parse_times(text):
    if text is None:
        return None
    try:
        times = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise PlotInputError(f"--times must be comma-separated numbers, got {text!r}")
    if not times:
        raise PlotInputError("--times is empty")
    return times


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render one panel from a run directory."
    )
    parser.add_argument("kind", choices=KINDS, help="panel kind")
    parser.add_argument("--in", dest="in_dir", required=True, metavar="DIR",
                        help="run directory holding snapshots / CSVs / manifest")
    parser.add_argument("--out", required=True, metavar="FILE.png",
                        help="output image path")
    parser.add_argument("--times", default=None, metavar="LIST",
                        help="comma-separated snapshot times (profile panel: "
                             "all of them; heatmap: exactly one)")
    parser.add_argument("--eta", type=float, default=None,
                        help="decay rate for the spectrum guide line "
                             "(default: eps * gamma from the manifest)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.kind == "profile_panel":
            render_profile_panel(args.in_dir, args.out, _parse_times(args.times))
        elif args.kind == "cylinder_heatmap":
            times = _parse_times(args.times)
            if times is not None and len(times) != 1:
                raise PlotInputError("cylinder_heatmap takes exactly one time")
            render_cylinder_heatmap(args.in_dir, args.out,
                                    None if times is None else times[0])
        elif args.kind == "spectrum_scatter":
            render_spectrum_scatter(args.in_dir, args.out, args.eta)
        else:
            render_distance_series(args.in_dir, args.out)
    except PlotInputError as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return 2
    return 0


def entry() -> None:
    raise SystemExit(main())
