"""Benchmark command line.

Commands: ``accuracy`` (the default when only flags are given) sweeps tree
counts and direction tries over a CSV dataset and emits a report; ``scaling``
times one fixed configuration across worker counts; ``synth`` writes a
Gaussian CSV for quick experiments.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .bench import (
    ConfigError,
    ExperimentConfig,
    InvariantError,
    emit_report,
    run_experiment,
    time_parallel_scaling,
)
from .data import DataFormatError, gen_gaussian, save_points


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); keep the code contract
        raise UsageError(message)


def _int_tuple(value) -> tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    try:
        return tuple(int(part) for part in str(value).split(",") if part.strip() != "")
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {value!r}") from None


def _float_tuple(value) -> tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    try:
        return tuple(float(part) for part in str(value).split(",") if part.strip() != "")
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {value!r}") from None


def _apply_config_file(parser: _Parser, argv: list[str]) -> None:
    """Fold --config JSON values in as parser defaults; explicit flags win.

    Keys mirror the long flags one-to-one (hyphens or underscores both
    accepted).
    """
    probe = _Parser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    try:
        payload = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {known.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {known.config} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config {known.config} must hold a JSON object of flag values")
    valid = {action.dest for action in parser._actions if action.dest != "help"}
    overrides = {}
    for key, value in payload.items():
        dest = str(key).replace("-", "_")
        if dest not in valid:
            raise ConfigError(f"unknown config key {key!r}")
        overrides[dest] = value
    parser.set_defaults(**overrides)


def _add_input_flags(parser: _Parser) -> None:
    parser.add_argument("--input", help="CSV dataset path")
    parser.add_argument("--format", default="csv", choices=["csv"], help="input format")
    parser.add_argument("--header", action="store_true", help="first input row is a header")
    parser.add_argument("--dataset-id", default="", help="dataset label for report rows")
    parser.add_argument("--k", default=5, help="neighbors per query")
    parser.add_argument("--leaf-size", default=20, help="node size below which growth stops")
    parser.add_argument("--seed", default=0, help="master seed; all run seeds derive from it")
    parser.add_argument("--workers", default=1, help="parallel workers for build and query")
    parser.add_argument("--standardize", action="store_true",
                        help="standardize columns before indexing (off by default)")
    parser.add_argument("--no-oracle", action="store_true",
                        help="skip the exhaustive reference; timing-only run")
    parser.add_argument("--oracle-cache", help="directory for cached exhaustive results")
    parser.add_argument("--out", help="report path (stdout when omitted)")
    parser.add_argument("--out-format", default="csv", choices=["csv", "json"])
    parser.add_argument("--config", help="JSON file whose keys mirror these flags")


def _emit(rows, out_format: str, out: str | None) -> None:
    text = emit_report(rows, out_format, out)
    if out is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)


def cmd_accuracy(argv: list[str]) -> int:
    parser = _Parser(prog="rpforest-bench accuracy",
                     description="Sweep tree counts and tries, score against the exact answers.")
    _add_input_flags(parser)
    parser.add_argument("--trees", default="10,20,40,60,80,100",
                        help="comma list of forest sizes")
    parser.add_argument("--ntry", default="1", help="comma list of directions tried per split")
    parser.add_argument("--runs", default=20, help="repetitions per cell")
    _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    cfg = ExperimentConfig(
        input=args.input,
        format=args.format,
        has_header=bool(args.header),
        dataset_id=args.dataset_id,
        k=int(args.k),
        tree_counts=_int_tuple(args.trees),
        n_try_list=_int_tuple(args.ntry),
        leaf_capacity=int(args.leaf_size),
        runs=int(args.runs),
        master_seed=int(args.seed),
        workers=int(args.workers),
        standardize=bool(args.standardize),
        no_oracle=bool(args.no_oracle),
        oracle_cache=args.oracle_cache,
        out=args.out,
        out_format=args.out_format,
    )
    _emit(run_experiment(cfg), cfg.out_format, cfg.out)
    return 0


def cmd_scaling(argv: list[str]) -> int:
    parser = _Parser(prog="rpforest-bench scaling",
                     description="Time one configuration across worker counts.")
    _add_input_flags(parser)
    parser.add_argument("--trees", default=40, help="fixed forest size")
    parser.add_argument("--ntry", default="1", help="directions tried per split")
    parser.add_argument("--workers-list", default="1,2,4", help="comma list of worker counts")
    _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    cfg = ExperimentConfig(
        input=args.input,
        format=args.format,
        has_header=bool(args.header),
        dataset_id=args.dataset_id,
        k=int(args.k),
        n_try_list=_int_tuple(args.ntry),
        leaf_capacity=int(args.leaf_size),
        master_seed=int(args.seed),
        standardize=bool(args.standardize),
        no_oracle=bool(args.no_oracle),
        oracle_cache=args.oracle_cache,
        out=args.out,
        out_format=args.out_format,
    )
    rows = time_parallel_scaling(cfg, _int_tuple(args.workers_list), n_trees=int(args.trees))
    _emit(rows, cfg.out_format, cfg.out)
    return 0


def cmd_synth(argv: list[str]) -> int:
    parser = _Parser(prog="rpforest-bench synth",
                     description="Write a centered Gaussian CSV dataset.")
    parser.add_argument("--n", required=True, help="number of points")
    parser.add_argument("--dim", required=True, help="dimensions")
    parser.add_argument("--scales", default="1",
                        help="per-axis standard deviations; one value broadcasts")
    parser.add_argument("--seed", default=0)
    parser.add_argument("--out", required=True, help="CSV path to write")
    args = parser.parse_args(argv)
    n, dim = int(args.n), int(args.dim)
    scales = _float_tuple(args.scales)
    if len(scales) == 1:
        scales = scales * dim
    data = gen_gaussian(n, dim, scales, seed=int(args.seed))
    save_points(data, args.out)
    print(f"wrote {n}x{dim} dataset to {args.out}", file=sys.stderr)
    return 0


COMMANDS = {"accuracy": cmd_accuracy, "scaling": cmd_scaling, "synth": cmd_synth}

_TOP_HELP = """usage: rpforest-bench [command] [flags]

commands:
  accuracy   sweep tree counts and tries, score against exact answers (default)
  scaling    time one configuration across worker counts
  synth      write a Gaussian CSV dataset

Flags given without a command run `accuracy`.  See `rpforest-bench <command> -h`.
"""


def _dispatch(argv: list[str]) -> int:
    if not argv:
        sys.stderr.write(_TOP_HELP)
        raise UsageError("no command or flags given")
    if argv[0] in ("-h", "--help"):
        sys.stdout.write(_TOP_HELP)
        return 0
    if argv[0].startswith("-"):
        argv = ["accuracy"] + argv
    if argv[0] not in COMMANDS:
        raise UsageError(f"unknown command {argv[0]!r}; expected one of {sorted(COMMANDS)}")
    return COMMANDS[argv[0]](argv[1:])


def main(argv=None) -> int:
    try:
        return _dispatch(list(sys.argv[1:] if argv is None else argv))
    except SystemExit as exc:  # argparse -h/--help
        return exc.code if isinstance(exc.code, int) else 0
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
