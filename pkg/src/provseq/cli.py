"""Command-line driver.

One subcommand per pipeline stage plus ``pipeline`` to run them all::

    provseq pipeline --config run.json
    provseq sketch   --config run.json
    provseq train    --config run.json --fraction 0.25
    provseq extract  --config run.json --fraction 0.25
    provseq detect   --config run.json --fraction 0.25
    provseq eval     --config run.json --fraction 0.25

The config is a JSON file (see README); ``--set dotted.key=value``
overrides individual entries and the PROVSEQ_OUTPUT_DIR environment
variable overrides the output directory only.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import (
    DataError,
    NumericError,
    ProvseqError,
    StageFailure,
    UsageError,
)
from .pipeline import PipelineConfig, run_pipeline, run_stage

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

ENV_OUTPUT_DIR = "PROVSEQ_OUTPUT_DIR"


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2
    for data errors, so route usage failures to code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="provseq",
                     description="provenance-stream anomaly detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("pipeline", "run every stage end to end"),
        ("sketch", "ingest edge streams and emit feature sequences"),
        ("train", "train the sequence autoencoder on benign graphs"),
        ("extract", "extract context feature vectors with the frozen encoder"),
        ("detect", "fit the detector and score the test batch"),
        ("eval", "sweep thresholds, write the PR curve, figures, and summary"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON pipeline config")
        p.add_argument("--output-dir", default=None,
                       help="override the config's output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry by dotted key, e.g. "
                            "--set sketch.interval=500")
        if name != "sketch" and name != "pipeline":
            p.add_argument("--fraction", type=float, default=None,
                           help="train fraction to process (default: all configured)")
    return parser


def _apply_override(obj: dict, dotted: str, raw: str) -> None:
    keys = dotted.split(".")
    target = obj
    for key in keys[:-1]:
        if key not in target or not isinstance(target[key], dict):
            target[key] = {}
        target = target[key]
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    target[keys[-1]] = value


def _load_config(args) -> PipelineConfig:
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {args.config} is not valid JSON: {exc}")
    for override in args.set:
        if "=" not in override:
            raise UsageError(f"--set expects KEY=VALUE, got {override!r}")
        key, raw = override.split("=", 1)
        _apply_override(obj, key, raw)
    if args.output_dir:
        obj["output_dir"] = args.output_dir
    env_dir = os.environ.get(ENV_OUTPUT_DIR)
    if env_dir:
        obj["output_dir"] = env_dir
    return PipelineConfig.from_dict(obj)


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, StageFailure):
        return _exit_code_for(exc.cause)
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    return EXIT_DATA


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "pipeline":
            result = run_pipeline(cfg, config_source=None if args.set or args.output_dir
                                  or os.environ.get(ENV_OUTPUT_DIR) else args.config)
            for fraction, summary in sorted(result["fractions"].items()):
                print(f"fraction {fraction}: PR-AUC {summary['pr_auc']:.4f}")
            print(f"report: {os.path.join(cfg.output_dir, 'report.json')}")
        else:
            fraction = getattr(args, "fraction", None)
            run_stage(cfg, args.command, fraction)
            print(f"{args.command}: done -> {cfg.output_dir}")
        return EXIT_OK
    except ProvseqError as exc:
        print(f"provseq {args.command}: {exc}", file=sys.stderr)
        return _exit_code_for(exc)
    except OSError as exc:
        print(f"provseq {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
