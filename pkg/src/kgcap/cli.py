"""Subcommand CLI driving the pipeline from one JSON config file.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
Flags override config keys; ``--seed`` re-derives every module seed from
the new global value. ``KGCAP_CACHE_DIR`` sets the disk cache used by the
live concept-graph client.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .config import PipelineConfig
from .errors import ConfigError, DataError, KgcapError, NumericError
from .pipeline import STAGE_ORDER, collect_manifests, run_pipeline, run_stage

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"--set expects key.path=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings are fine
    return key, value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgcap",
        description="Knowledge-graph-enriched caption pipeline",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--manifest",
        metavar="OUT_DIR",
        help="print the artifact lineage recorded under OUT_DIR and exit",
    )
    sub = parser.add_subparsers(dest="command")
    for stage in STAGE_ORDER + ("pipeline",):
        p = sub.add_parser(stage, help=f"run the {stage} stage" if stage != "pipeline"
                           else "run every stage in order")
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the global seed")
        p.add_argument(
            "--output-dir", default=None, help="override paths.output_dir"
        )
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override any config key (dotted path, JSON value)",
        )
        p.add_argument(
            "--jobs", type=int, default=1,
            help="worker-thread cap for parallelizable stages",
        )
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config)
    overrides: dict[str, object] = {}
    for item in args.set:
        key, value = _parse_override(item)
        overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output_dir is not None:
        overrides["paths.output_dir"] = args.output_dir
    if overrides:
        cfg = cfg.apply_overrides(overrides)
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.manifest:
        manifests = collect_manifests(args.manifest)
        print(json.dumps(manifests, indent=2, sort_keys=True))
        return 0
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    try:
        cfg = load_config(args)
        if args.command == "pipeline":
            manifests = run_pipeline(cfg)
            for path in manifests:
                print(f"wrote {path}")
        else:
            print(f"wrote {run_stage(cfg, args.command)}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, KgcapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
