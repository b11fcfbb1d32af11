"""CSV output, CSV parsing and multi-controller comparison tables."""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .runner import COLUMNS, SIG_DIGITS, Metrics, Outcome, RunResult, compute_metrics
from .scenario import ConfigError, Controller, ScenarioConfig, make_reference

HIERARCHICAL_MAX_RMS_CT = 0.10


def _fmt(v: float) -> str:
    return f"{v:.{SIG_DIGITS}g}"


def write_csv(result: RunResult, path) -> Path:
    """Header plus one row per control tick, 9 significant digits."""
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for row in result.data:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc
    return path


def read_csv(path) -> np.ndarray:
    """Parse a file written by :func:`write_csv` back into a ticks x columns array."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read CSV {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != tuple(COLUMNS):
        raise ValueError(f"{path}: unexpected header")
    if len(rows) == 1:
        return np.zeros((0, len(COLUMNS)))
    return np.array([[float(v) for v in r] for r in rows[1:]])


def metrics_from_csv(path, cfg: ScenarioConfig) -> Metrics:
    return compute_metrics(read_csv(path), make_reference(cfg.task))


def hierarchical_failures(result: RunResult) -> list[str]:
    """Reasons a Hierarchical run misses its acceptance thresholds (empty when it passes)."""
    reasons = []
    if result.outcome is not Outcome.REACHED_TARGET:
        reasons.append(f"outcome {result.outcome.value}")
    if result.metrics.rms_cross_track >= HIERARCHICAL_MAX_RMS_CT:
        reasons.append(f"RMS cross-track {result.metrics.rms_cross_track:.3f} m")
    if result.ticks:
        d = result.column("d")
        f = result.column("f_c")
        if np.any(np.abs(d) > result.d_max) or np.any(f < 0) or np.any(f > result.F_max):
            reasons.append("contact plan outside its bounds")
    return reasons


@dataclass
class ComparisonRow:
    name: str
    controller: str
    outcome: str
    metrics: Metrics


@dataclass
class Comparison:
    task: str
    rows: list
    failures: dict  # scenario name -> reasons, Hierarchical rows only

    @property
    def ok(self) -> bool:
        return not self.failures

    def table(self) -> str:
        keys = ["rms_cross_track", "max_cross_track", "rms_heading_error", "final_position_error",
                "median_solve_obj", "p99_solve_obj", "median_solve_loco", "p99_solve_loco"]
        head = ["scenario", "controller", "outcome"] + keys
        body = [[r.name, r.controller, r.outcome] + [f"{getattr(r.metrics, k):.4g}" for k in keys]
                for r in self.rows]
        widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
        lines = ["  ".join(str(x).ljust(w) for x, w in zip(line, widths)) for line in [head] + body]
        return f"task: {self.task}\n" + "\n".join(lines)


def compare_results(results) -> Comparison:
    results = list(results)
    if len(results) < 2:
        raise ConfigError("comparison needs at least two scenarios")
    tasks = {r.task for r in results}
    if len(tasks) != 1:
        raise ConfigError(f"scenarios use different tasks: {sorted(tasks)}")
    rows = [ComparisonRow(r.name, r.controller, r.outcome.value, r.metrics) for r in results]
    failures = {}
    for r in results:
        if r.controller == Controller.HIERARCHICAL.value:
            reasons = hierarchical_failures(r)
            if reasons:
                failures[r.name] = reasons
    return Comparison(tasks.pop(), rows, failures)


def compare(cfgs, run=None) -> tuple[Comparison, list]:
    """Run every scenario and tabulate them; configs must share one task."""
    from .runner import run_scenario

    cfgs = list(cfgs)
    if len(cfgs) < 2:
        raise ConfigError("comparison needs at least two scenarios")
    kinds = {c.task.kind for c in cfgs}
    if len(kinds) != 1:
        raise ConfigError(f"scenarios use different tasks: {sorted(k.value for k in kinds)}")
    run = run or run_scenario
    results = [run(c) for c in cfgs]
    return compare_results(results), results


def metrics_dict(m: Metrics) -> dict:
    return {f.name: getattr(m, f.name) for f in fields(m)}
