"""Command line: turn a benchmark CSV into a figure (and optional tidy table)."""

from __future__ import annotations

import argparse
import sys

from .aggregate import PlotSpec, SchemaError, plot_metric_curves


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot", description="Render mean metric curves with SE bars from a benchmark CSV."
    )
    parser.add_argument("--in", dest="input_csv", required=True, help="benchmark results CSV")
    parser.add_argument("--metric", default="simple_regret")
    parser.add_argument("--out", required=True, help="output image (svg/png/pdf)")
    parser.add_argument("--data-out", default=None, help="also write the tidy aggregation CSV")
    args = parser.parse_args(argv)

    spec = PlotSpec(args.input_csv, args.metric, args.out, args.data_out)
    try:
        points = plot_metric_curves(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    policies = sorted({p.policy for p in points})
    print(f"wrote {args.out} ({len(policies)} curves: {', '.join(policies)})")
    if args.data_out:
        print(f"wrote {args.data_out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
