"""Command-line interface.

One subcommand per pipeline stage plus ``all`` (runs every stage in order)
and ``synth`` (writes a synthetic corpus from a spec file). Errors map to
distinct exit codes; see errors.py for the full table.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import load_pipeline_config, load_synth_spec
from .errors import PatternscopeError
from .pipeline import STAGES, Pipeline
from .synth import generate

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patternscope",
        description="Mine mobile UI corpora for design component usage.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true",
                        help="debug-level logging on stderr")

    for stage in STAGES + ("all",):
        help_text = ("run every stage in order" if stage == "all"
                     else f"run the {stage} stage")
        p = sub.add_parser(stage, parents=[common], help=help_text)
        p.add_argument("--config", required=True,
                       help="pipeline config file (key = value lines)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None,
                       help="override the config output directory")
        p.add_argument("--stage-force", action="store_true",
                       help="re-run even when the manifest says up to date")

    synth_p = sub.add_parser("synth", parents=[common],
                             help="generate a synthetic corpus")
    synth_p.add_argument("--spec", required=True,
                         help="corpus spec file (key = value lines)")
    synth_p.add_argument("--out", required=True,
                         help="directory to write the corpus into")
    synth_p.add_argument("--seed", type=int, default=None,
                         help="override the spec seed")
    synth_p.add_argument("--no-render", action="store_true",
                         help="write hierarchies and metadata only")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            spec = load_synth_spec(args.spec)
            if args.seed is not None:
                spec = dataclasses.replace(spec, seed=args.seed)
                spec.validate()
            truth = generate(spec, args.out, render=not args.no_render)
            app_count = len({row.package for row in truth.rows})
            logger.info("wrote %d apps to %s", app_count, args.out)
        else:
            overrides = {}
            if args.seed is not None:
                overrides["seed"] = str(args.seed)
            if args.out is not None:
                overrides["out"] = args.out
            cfg = load_pipeline_config(args.config, overrides)
            Pipeline(cfg).run(args.command, force=args.stage_force)
    except PatternscopeError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
