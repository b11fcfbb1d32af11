"""Command line entry point: run one scenario, compare a directory, list tasks."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .report import compare_results, hierarchical_failures, write_csv
from .runner import run_scenario
from .scenario import ConfigError, Controller, Task, load_scenario

EXIT_OK = 0
EXIT_ACCEPTANCE = 1
EXIT_CONFIG = 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quadpush", description="Quadruped box-pushing simulation harness")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set a scenario field, dotted keys for nested sections (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario file and write its CSV")
    run.add_argument("scenario", type=Path)
    run.add_argument("--out", type=Path, required=True, help="CSV output path")
    run.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     dest="sub_override")

    cmp_ = sub.add_parser("compare", help="run every scenario file in a directory and tabulate")
    cmp_.add_argument("directory", type=Path)
    cmp_.add_argument("--out-dir", type=Path, default=None, help="also write one CSV per scenario")
    cmp_.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                      dest="sub_override")

    sub.add_parser("list-tasks", help="print the built-in task names")
    return p


def _summary(result) -> str:
    m = result.metrics
    return (f"{result.name}: {result.controller} {result.outcome.value} "
            f"rms_ct={m.rms_cross_track:.4f} m final_err={m.final_position_error:.4f} m "
            f"solve_obj median={m.median_solve_obj * 1e3:.3f} ms p99={m.p99_solve_obj * 1e3:.3f} ms "
            f"solve_loco median={m.median_solve_loco * 1e3:.3f} ms p99={m.p99_solve_loco * 1e3:.3f} ms")


def _cmd_run(args, overrides) -> int:
    cfg = load_scenario(args.scenario, overrides)
    result = run_scenario(cfg)
    write_csv(result, args.out)
    print(_summary(result))
    if cfg.controller is Controller.HIERARCHICAL:
        reasons = hierarchical_failures(result)
        if reasons:
            print("acceptance failure: " + "; ".join(reasons), file=sys.stderr)
            return EXIT_ACCEPTANCE
    return EXIT_OK


def _cmd_compare(args, overrides) -> int:
    if not args.directory.is_dir():
        raise ConfigError(f"not a directory: {args.directory}")
    files = sorted(p for p in args.directory.iterdir() if p.suffix in (".yaml", ".yml"))
    cfgs = [load_scenario(f, overrides) for f in files]
    if len(cfgs) < 2:
        raise ConfigError(f"{args.directory}: comparison needs at least two scenario files")
    kinds = {c.task.kind for c in cfgs}
    if len(kinds) != 1:
        raise ConfigError(f"scenarios use different tasks: {sorted(k.value for k in kinds)}")
    results = []
    for cfg in cfgs:
        result = run_scenario(cfg)
        if args.out_dir is not None:
            write_csv(result, args.out_dir / f"{cfg.name}.csv")
        results.append(result)
    report = compare_results(results)
    print(report.table())
    for name, reasons in report.failures.items():
        print(f"acceptance failure in {name}: " + "; ".join(reasons), file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_ACCEPTANCE


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides = list(args.override) + list(getattr(args, "sub_override", []))
    try:
        if args.command == "list-tasks":
            for task in Task:
                print(task.value)
            return EXIT_OK
        if args.command == "run":
            return _cmd_run(args, overrides)
        return _cmd_compare(args, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
