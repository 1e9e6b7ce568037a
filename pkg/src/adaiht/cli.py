"""Command-line entry point: ``adaiht {run,rip-audit,demo,replay}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .exceptions import ConfigError, DesignParseError, EnumerationBudgetError
from .experiments import (ESTIMATORS, ScenarioConfig, aggregate, emit_csv, emit_plot_data, emit_summary_csv,
                          format_summary, load_scenarios, parse_override, read_records_csv, run_replication,
                          run_scenario)
from .model import DESIGN_KINDS, generate_design, load_design_csv
from .rip import RIP_CSV_COLUMNS, restricted_extremes_exact, restricted_extremes_sampled

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

DEMO_SCENARIO = {
    "name": "demo",
    "n": 400,
    "p": 300,
    "s": 5,
    "sigma": 1.0,
    "a_over_astar": [0.8, 2.0],
    "replications": 4,
    "estimators": ["nonadaptive", "iteration_selection", "sharp_estimation", "ista_lasso", "oracle_ls"],
}

log = logging.getLogger("adaiht")


class _UsageError(Exception):
    pass


def _default_out(fallback: str) -> Path:
    return Path(os.environ.get("ADAIHT_OUT", fallback))


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("support sizes must be positive")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaiht", description="Adaptive IHT experiments and design audits.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(p, config_required):
        p.add_argument("--config", type=Path, required=config_required, metavar="PATH",
                       help="scenario file (TOML: flat key = value pairs or [scenario.NAME] tables)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key after parsing; repeatable")
        p.add_argument("--seed", type=_u64, metavar="U64", help="master seed, overrides the config value")

    run = sub.add_parser("run", help="run scenarios and write CSV, plot data and a summary")
    common(run, True)
    run.add_argument("--out", type=Path, metavar="DIR", help="output directory (default: $ADAIHT_OUT or ./adaiht_out)")
    run.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1, metavar="N",
                     help="worker processes (default: available cores); output does not depend on N")

    demo = sub.add_parser("demo", help="run a small built-in scenario end to end")
    demo.add_argument("--out", type=Path, metavar="DIR",
                      help="output directory (default: $ADAIHT_OUT or ./adaiht_demo)")
    demo.add_argument("--seed", type=_u64, default=0, metavar="U64", help="master seed (default 0)")
    demo.add_argument("--threads", type=_positive_int, default=1, metavar="N", help="worker processes (default 1)")
    demo.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                      help="override a demo scenario key; repeatable")

    audit = sub.add_parser("rip-audit", help="restricted eigenvalue audit of a design")
    src = audit.add_mutually_exclusive_group(required=True)
    src.add_argument("--design", type=Path, metavar="PATH", help="design CSV file (header 'n,p')")
    src.add_argument("--kind", choices=[k for k in DESIGN_KINDS if k != "from_file"],
                     help="generate the design instead")
    audit.add_argument("--n", type=_positive_int, help="rows of a generated design")
    audit.add_argument("--p", type=_positive_int, help="columns of a generated design")
    audit.add_argument("--seed", type=_u64, default=0, metavar="U64", help="seed of a generated design")
    audit.add_argument("--raw", action="store_true", help="do not normalize a generated design")
    audit.add_argument("--s", type=_int_list, default=[1, 2, 3], metavar="S[,S...]",
                       help="support sizes to audit (default 1,2,3)")
    audit.add_argument("--sampled", type=_positive_int, metavar="TRIALS",
                       help="sample this many supports instead of exact enumeration")
    audit.add_argument("--budget", type=_positive_int, default=2_000_000,
                       help="largest number of supports enumerated exactly")
    audit.add_argument("--out", type=Path, metavar="FILE", help="also write the audit table to this CSV file")

    replay = sub.add_parser("replay", help="re-run one result row and print its iterate trace")
    replay.add_argument("--run-dir", type=Path, metavar="DIR",
                        help="output directory of a prior run (uses its metadata.json and results.csv)")
    replay.add_argument("--row", type=int, metavar="K", help="0-based data row of results.csv in --run-dir")
    common(replay, False)
    replay.add_argument("--scenario", help="scenario name (needed when the config holds several)")
    replay.add_argument("--replication", type=int, metavar="R")
    replay.add_argument("--estimator", choices=ESTIMATORS)
    replay.add_argument("--a-over-astar", type=float, metavar="A", help="grid value (default: first)")
    replay.add_argument("--out", type=Path, metavar="FILE", help="write the trace CSV here instead of stdout")
    return parser


def _with_seed(configs, seed):
    if seed is None:
        return configs
    return [ScenarioConfig.from_mapping({**c.to_mapping(), "master_seed": seed}) for c in configs]


def _write_outputs(configs, records, out: Path, overrides, threads: int, command: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    report = aggregate(records)
    emit_csv(records, out / "results.csv")
    emit_summary_csv(report, out / "summary.csv")
    emit_plot_data(report, out / "plot_data.csv")
    metadata = {
        "command": command,
        "version": __version__,
        "overrides": list(overrides),
        "threads": threads,
        "scenarios": [c.to_mapping() for c in configs],
    }
    (out / "metadata.json").write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    print(format_summary(report))
    print(f"\nwrote {len(records)} rows to {out / 'results.csv'}")


def _run_configs(configs, threads):
    records = []
    for config in configs:
        t0 = time.perf_counter()
        records.extend(run_scenario(config, threads=threads))
        log.info("scenario %s done in %.1fs", config.name, time.perf_counter() - t0)
    return records


def cmd_run(args) -> int:
    configs = _with_seed(load_scenarios(args.config, args.overrides), args.seed)
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate scenario names {names}")
    records = _run_configs(configs, args.threads)
    _write_outputs(configs, records, args.out or _default_out("adaiht_out"), args.overrides, args.threads, "run")
    return EXIT_OK


def cmd_demo(args) -> int:
    parsed = dict(parse_override(o) for o in args.overrides)
    config = ScenarioConfig.from_mapping({**DEMO_SCENARIO, "master_seed": args.seed, **parsed})
    records = _run_configs([config], args.threads)
    _write_outputs([config], records, args.out or _default_out("adaiht_demo"), args.overrides, args.threads, "demo")
    return EXIT_OK


def cmd_rip_audit(args) -> int:
    if args.design is not None:
        design = load_design_csv(args.design)
    else:
        if args.n is None or args.p is None:
            raise _UsageError("--kind needs --n and --p")
        design = generate_design(args.kind, args.n, args.p, normalize=not args.raw, seed=args.seed)
    lines = [",".join(RIP_CSV_COLUMNS)]
    for s in args.s:
        if args.sampled:
            report = restricted_extremes_sampled(design, s, args.sampled, seed=args.seed)
        else:
            report = restricted_extremes_exact(design, s, args.budget)
        print(report.summary())
        lines.append(report.csv_line())
    if args.out:
        args.out.write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _replay_target(args):
    """Resolve (config, replication, estimator, a, expected_row) from the arguments."""
    expected = None
    if args.run_dir is not None:
        if args.row is None:
            raise _UsageError("--run-dir needs --row")
        meta = json.loads((args.run_dir / "metadata.json").read_text())
        rows = read_records_csv(args.run_dir / "results.csv")
        if not 0 <= args.row < len(rows):
            raise _UsageError(f"--row must lie in [0, {len(rows)})")
        expected = rows[args.row]
        configs = [ScenarioConfig.from_mapping(m) for m in meta["scenarios"]]
        by_name = {c.name: c for c in configs}
        config = by_name[expected.scenario]
        return config, expected.replication, expected.estimator, expected.a_over_astar, expected
    if args.config is None:
        raise _UsageError("replay needs --run-dir/--row or --config")
    if args.replication is None or args.estimator is None:
        raise _UsageError("replay with --config needs --replication and --estimator")
    configs = _with_seed(load_scenarios(args.config, args.overrides), args.seed)
    if args.scenario is not None:
        configs = [c for c in configs if c.name == args.scenario]
        if not configs:
            raise _UsageError(f"no scenario named {args.scenario!r}")
    elif len(configs) > 1:
        raise _UsageError("config holds several scenarios; pass --scenario")
    config = configs[0]
    a = args.a_over_astar if args.a_over_astar is not None else config.a_over_astar[0]
    return config, args.replication, args.estimator, a, expected


def cmd_replay(args) -> int:
    config, replication, estimator, a, expected = _replay_target(args)
    if estimator not in config.estimators:
        config = ScenarioConfig.from_mapping({**config.to_mapping(), "estimators": [estimator]})
    records, traces = run_replication(config, replication, a, keep_traces=True)
    record = next(r for r in records if r.estimator == estimator)
    trace = traces[estimator]
    if args.out:
        with args.out.open("w", newline="") as fh:
            trace.write_csv(fh, replication)
    else:
        trace.write_csv(sys.stdout, replication)
    print(f"# scenario={config.name} replication={replication} estimator={estimator} a_over_astar={a!r} "
          f"seed={record.seed} stop_index={trace.stop_index} stop_reason={trace.stop_reason}", file=sys.stderr)
    print(f"# l2_error_sq={record.l2_error_sq!r}", file=sys.stderr)
    if expected is not None:
        if expected.seed != record.seed or expected.l2_error_sq != record.l2_error_sq:
            print(f"# MISMATCH: row has seed={expected.seed} l2_error_sq={expected.l2_error_sq!r}", file=sys.stderr)
            return EXIT_FAILURE
        print("# matches the stored row", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "demo": cmd_demo, "rip-audit": cmd_rip_audit, "replay": cmd_replay}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (_UsageError, ConfigError) as exc:
        print(f"adaiht: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DesignParseError, EnumerationBudgetError, OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"adaiht: failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
