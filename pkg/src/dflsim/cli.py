"""Command-line entry points.

Subcommands: run (execute an experiment), validate (parse and check a config),
certify (print the certificate table and gate verdict without running),
compare (max deviation between two metrics files). Argparse usage errors are
remapped from its default exit code onto this package's contract (1).
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ConfigurationError
from .harness import (
    EXIT_IO,
    EXIT_OK,
    EXIT_UNCERTIFIED,
    EXIT_USAGE,
    build_models,
    build_schedule,
    resolve_penalties,
    run_experiment,
)
from .metrics import compare_trajectories, read_metrics


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dflsim",
                     description="Delay-tolerant decentralized training simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="execute an experiment")
    run.add_argument("config", help="path to a TOML run configuration")
    run.add_argument("--seed", type=int, default=None, help="override the master seed")
    run.add_argument("--out", default=None, help="override the metrics output path")
    run.add_argument("--format", choices=("csv", "jsonl"), default=None,
                     help="override the metrics format")

    validate = sub.add_parser("validate", help="check a config without running")
    validate.add_argument("config")

    certify = sub.add_parser("certify", help="print the certificate table")
    certify.add_argument("config")

    compare = sub.add_parser("compare", help="compare two metrics files")
    compare.add_argument("file_a")
    compare.add_argument("file_b")
    compare.add_argument("--tol", type=float, required=True,
                         help="largest acceptable per-field deviation")
    return parser


def _print_config_error(exc: ConfigurationError):
    for violation in exc.violations:
        print(f"error: {violation}", file=sys.stderr)


def _input_error(exc: OSError) -> int:
    # a missing input path is a usage problem; 5 is reserved for I/O failures
    # on paths the run writes to
    print(f"error: {exc}", file=sys.stderr)
    return EXIT_USAGE if isinstance(exc, FileNotFoundError) else EXIT_IO


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = args.out
        if args.format is not None:
            overrides["format"] = args.format
        if overrides:
            config = config.override(**overrides)
        result = run_experiment(config)
    except ConfigurationError as exc:
        _print_config_error(exc)
        return EXIT_USAGE
    except OSError as exc:
        return _input_error(exc)
    for warning in config.warnings:
        print(f"warning: {warning}")
    summary = result.summary
    print(f"status: {summary['status']} ({summary['stamp']})")
    print(f"iterations: {summary['iterations_run']}, "
          f"converged_at: {summary['convergence']['converged_at']}")
    monitors = summary["monitors"]
    print("monitor minima: "
          f"slack_lemma1={monitors['min_slack_lemma1']}, "
          f"slack_lemma3={monitors['min_slack_lemma3']}, "
          f"lemma4_margin={monitors['min_lemma4_margin']}, "
          f"dual_residual_max={monitors['max_dual_residual']}")
    print(f"metrics: {result.metrics_path}")
    print(f"summary: {result.summary_path}")
    if summary["error"]:
        print(f"error: {summary['error']}", file=sys.stderr)
    return result.exit_code


def _cmd_validate(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigurationError as exc:
        _print_config_error(exc)
        return EXIT_USAGE
    except OSError as exc:
        return _input_error(exc)
    for warning in config.warnings:
        print(f"warning: {warning}")
    print("configuration OK")
    return EXIT_OK


def _cmd_certify(args) -> int:
    try:
        config = load_config(args.config)
        if config.algorithm != "consensus":
            print("error: certificates apply only to the consensus algorithm",
                  file=sys.stderr)
            return EXIT_USAGE
        models = build_models(config)
        schedule = build_schedule(config)
        penalties = resolve_penalties(config, models)
        from .certify import certificate_report
        report = certificate_report(
            list(zip(penalties, (m.weighted_grad_bound() for m in models),
                     schedule.bounds)),
            gate_variant=config.alpha_variant)
    except ConfigurationError as exc:
        _print_config_error(exc)
        return EXIT_USAGE
    except OSError as exc:
        return _input_error(exc)
    for warning in config.warnings:
        print(f"warning: {warning}")
    for k, cert in enumerate(report.clients):
        print(f"client {k}: penalty={cert.penalty:.6g} "
              f"grad_bound={cert.grad_bound:.6g} delay_bound={cert.delay_bound} "
              f"conservative={cert.coefficient_conservative:.6g} "
              f"nominal={cert.coefficient_nominal:.6g} "
              f"margin={cert.penalty_margin:.6g} "
              f"pass={'yes' if cert.passes(report.gate_variant) else 'no'}")
    verdict = "CERTIFIED" if report.certified else "UNCERTIFIED"
    print(f"gate variant: {report.gate_variant} -> {verdict}")
    return EXIT_OK if report.certified else EXIT_UNCERTIFIED


def _cmd_compare(args) -> int:
    try:
        rows_a = read_metrics(args.file_a)
        rows_b = read_metrics(args.file_b)
        report = compare_trajectories(rows_a, rows_b)
    except ConfigurationError as exc:
        _print_config_error(exc)
        return EXIT_USAGE
    except OSError as exc:
        return _input_error(exc)
    print(report.describe())
    return EXIT_OK if report.max_deviation <= args.tol else EXIT_UNCERTIFIED


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "validate": _cmd_validate,
        "certify": _cmd_certify,
        "compare": _cmd_compare,
    }
    return handlers[args.command](args)


def main_entry():
    sys.exit(main())
