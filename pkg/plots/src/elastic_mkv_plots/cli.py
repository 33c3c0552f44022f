"""Command-line entry point: render figures from a run manifest."""

from __future__ import annotations

import argparse
import logging
import sys

from .render import FIGURE_KINDS, SchemaError, render_figures

log = logging.getLogger("elastic_mkv_plots")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elastic-mkv-plots",
        description="Render figures from an experiment run directory.",
    )
    parser.add_argument("--manifest", required=True, help="path to run.json")
    parser.add_argument("--out", required=True, help="output directory for figures")
    parser.add_argument("--format", default="png", choices=("png", "svg"))
    parser.add_argument(
        "--kinds",
        nargs="+",
        choices=FIGURE_KINDS,
        default=None,
        help="restrict to specific figure kinds (default: all applicable)",
    )
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        rendered, notices = render_figures(
            args.manifest, args.out, fmt=args.format, kinds=args.kinds
        )
    except SchemaError as e:
        log.error("schema error: %s", e)
        return 2
    for notice in notices:
        log.info("%s", notice)
    for spec in rendered:
        log.info("wrote %s (+ %s)", spec.output, spec.sidecar.name)
    if not rendered:
        log.warning("no applicable figures for this manifest")
    return 0


if __name__ == "__main__":
    sys.exit(main())
