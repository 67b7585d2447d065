"""Command-line entry point: ``semiverified {simulate,recover,sweep,oracle-check}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .csp import format_bits
from .errors import ConfigError, EmptyConstraint
from .harness import (
    ExperimentConfig,
    ReportIOError,
    aggregate,
    load_json,
    load_sweep,
    oracle_check,
    render_report,
    emit_report,
    run_sweep,
    run_trials,
    sim_config_to_dict,
    trial_context,
    validate,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAIL_RATE = 2
EXIT_IO = 3


def _parse_tuples(text: str) -> list[tuple[int, ...]]:
    out = []
    for part in text.split(";"):
        part = part.strip()
        if part:
            out.append(tuple(int(x) for x in part.split(",")))
    return out


def _load_experiment(args) -> ExperimentConfig:
    try:
        data = load_json(args.config)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: {exc}") from None
    cfg = ExperimentConfig.from_dict(data)
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if getattr(args, "trials", None) is not None:
        cfg = replace(cfg, trials=args.trials)
    return cfg


def _write(rows, args, default_path=None) -> None:
    path = args.out or default_path
    if path:
        emit_report(rows, args.format, path)
    else:
        sys.stdout.write(render_report(rows, args.format))


def _check_fail_rate(rows, threshold) -> int:
    if threshold is None:
        return EXIT_OK
    worst = max(r["fail_rate"] for r in rows)
    if worst > threshold:
        logging.error("fail rate %.3f exceeds --max-fail-rate %.3f", worst, threshold)
        return EXIT_FAIL_RATE
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_experiment(args)
    ctx = trial_context(cfg, args.trial)
    n, r0 = cfg.sim.n, cfg.sim.r0
    tuples = _parse_tuples(args.tuples) if args.tuples else [tuple(range(i, i + r0)) for i in range(0, n - r0 + 1, r0)][: args.count]
    entries = []
    for t in tuples:
        if len(t) != r0:
            raise ConfigError(f"tuple {t} does not have arity {r0}")
        if len(set(t)) != r0 or min(t) < 0 or max(t) >= n:
            raise ConfigError(f"tuple {t} is not a set of distinct variables in [0, {n})")
        t = tuple(sorted(t))
        batch = ctx.provider.sample_reviews(t)
        entry = {
            "variables": list(t),
            "planted": format_bits(ctx.planted.restrict(t)),
            "vote_counts": {format_bits(k): v for k, v in batch.counts.items()},
        }
        try:
            entry["allowed"] = sorted(format_bits(a) for a in ctx.provider.query(t).allowed)
        except EmptyConstraint:
            entry["allowed"] = []
        entry["sound"] = entry["planted"] in entry["allowed"]
        entries.append(entry)
    snapshot = {
        "sim": sim_config_to_dict(ctx.provider.config),
        "trial_index": args.trial,
        "threshold_alpha": cfg.sim.threshold_alpha,
        "tuples": entries,
    }
    text = json.dumps(snapshot, indent=2) + "\n"
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise ReportIOError(f"cannot write snapshot to {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_recover(args) -> int:
    cfg = _load_experiment(args)
    validate(cfg)
    reports = run_trials(cfg, args.jobs)
    if args.per_trial:
        rows = [{**aggregate(cfg, [r]), "trial_index": r.trial_index, "seed": r.seed,
                 "fail_kinds": ";".join(e["kind"] for e in r.fail_events)} for r in reports]
    else:
        rows = [aggregate(cfg, reports)]
    _write(rows, args, cfg.output_path)
    return _check_fail_rate(rows, args.max_fail_rate)


def cmd_sweep(args) -> int:
    try:
        data = load_json(args.config)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: {exc}") from None
    template, grid = load_sweep(data)
    if args.seed is not None:
        template = replace(template, base_seed=args.seed)
    rows = run_sweep(template, grid, args.jobs)
    _write(rows, args, template.output_path)
    return _check_fail_rate(rows, args.max_fail_rate)


def cmd_oracle_check(args) -> int:
    cfg = _load_experiment(args)
    rows = oracle_check(cfg, instance_kind=args.instances)
    _write(rows, args)
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_FAIL_RATE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semiverified", description="Semi-verified recovery of planted CSP assignments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, fmt=True):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--out", help="output path (default: config output_path, else stdout)")
        if fmt:
            p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("simulate", help="print review counts and constraint sets of chosen tuples")
    common(p, fmt=False)
    p.add_argument("--tuples", help="semicolon-separated tuples, e.g. '0,1;2,3'")
    p.add_argument("--count", type=int, default=5, help="number of default tuples when --tuples is absent")
    p.add_argument("--trial", type=int, default=0, help="trial index whose streams to use")
    p.set_defaults(func=cmd_simulate)

    for name, func, helptext in (
        ("recover", cmd_recover, "run trials of one configuration"),
        ("sweep", cmd_sweep, "run a parameter grid"),
    ):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--max-fail-rate", type=float, help="exit 2 if any row's fail_rate exceeds this")
        if name == "recover":
            p.add_argument("--trials", type=int, help="override trials")
            p.add_argument("--per-trial", action="store_true", help="one row per trial instead of an aggregate")
        p.set_defaults(func=func)

    p = sub.add_parser("oracle-check", help="compare recovery tiers against brute force on small instances")
    common(p)
    p.add_argument("--trials", type=int, help="override the number of instances")
    p.add_argument("--instances", choices=("simulated", "sound"), default="simulated",
                   help="simulated reviews or noiseless constraints that always admit the planted assignment")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except ReportIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FileNotFoundError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, ValueError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
