"""Seeded Monte Carlo batches: paired execution, aggregation, file outputs.

Every run index maps to one sampled scenario executed under *each* requested
controller (identical initial conditions and masses across controllers), so
percent changes are paired comparisons. Runs are independent and may fan out
over a process pool; results are keyed by run index, making the batch output
invariant to worker count and completion order.

Output layout under the chosen directory:
    runs/<controller>/<k>.csv      per-run logs (optional)
    summary.json                   aggregates, percent changes, per-run metrics
    aggregate.csv                  one row per (controller, run)
    hist_<metric>_<controller>.csv histogram bins for external plotting
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics as metrics_mod
from .config import ScenarioConfig, sample_scenario
from .controllers import make_controller
from .geometry import Lane
from .metrics import MetricsReport, load_coast_down_table
from .simulation import run_scenario

METRIC_KEYS = ("pake_whpkm", "be_whpkm", "tel_whpkm", "travel_time_s", "avg_speed_mps")
HIST_KEYS = METRIC_KEYS + ("h0_min_m2",)


@dataclass
class BatchSummary:
    controllers: tuple[str, ...]
    runs: int
    per_run: dict[str, list[dict]]
    aggregate: dict[str, dict[str, dict[str, float]]]
    percent_change_vs_fifo: dict[str, dict[str, float]]
    collision_runs: dict[str, int]
    collision_pairs_total: dict[str, int]
    infeasible_runs: dict[str, int]
    scenario_digests: list[str] = field(default_factory=list)
    gridlock_runs: dict[str, int] = field(default_factory=dict)

    @property
    def any_gridlock(self) -> bool:
        return any(v > 0 for v in self.gridlock_runs.values())


def _report_row(report: MetricsReport) -> dict:
    row = report.to_json_dict()
    row["gridlock"] = report.gridlock
    row["infeasible_count"] = report.infeasible_count
    return row


def _execute_run(cfg: ScenarioConfig, run_index: int, controllers: tuple[str, ...],
                 fault_lane: Lane | None, log_dir: str | None, coast=None):
    scenario = sample_scenario(cfg, run_index, fault_lane=fault_lane, coast=coast)
    desired = scenario.desired_speed_by_id()
    out: dict[str, dict] = {}
    for name in controllers:
        controller = make_controller(name, cfg.gains_for(name), scenario.net, desired)
        log = run_scenario(scenario, controller)
        report = metrics_mod.compute_report(log, scenario.params_by_id())
        out[name] = _report_row(report)
        if log_dir is not None:
            path = os.path.join(log_dir, name, f"{run_index}.csv")
            log.write_csv(path)
    return run_index, scenario.digest(), out


def _worker(args):
    return _execute_run(*args)


def run_batch(
    cfg: ScenarioConfig,
    controllers=("fifo", "dpc", "ccbf"),
    runs: int | None = None,
    workers: int = 1,
    out_dir=None,
    save_logs: bool = False,
    fault_campaign: bool = False,
) -> BatchSummary:
    """Execute `runs` paired scenarios under every controller.

    In a fault campaign the first half of the runs drops a highway vehicle's
    power, the second half a merge vehicle's; victims sit mid-pack.
    """
    controllers = tuple(controllers)
    n_runs = cfg.runs if runs is None else runs
    log_dir = None
    if out_dir is not None and save_logs:
        log_dir = os.path.join(out_dir, "runs")
        for name in controllers:
            os.makedirs(os.path.join(log_dir, name), exist_ok=True)

    coast = load_coast_down_table()
    jobs = []
    for k in range(n_runs):
        fault_lane = None
        if fault_campaign:
            fault_lane = Lane.HIGHWAY if k < (n_runs + 1) // 2 else Lane.MERGE
        jobs.append((cfg, k, controllers, fault_lane, log_dir, coast))

    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for run_index, digest, rows in pool.map(_worker, jobs, chunksize=1):
                results[run_index] = (digest, rows)
    else:
        for job in jobs:
            run_index, digest, rows = _execute_run(*job)
            results[run_index] = (digest, rows)

    per_run: dict[str, list[dict]] = {name: [] for name in controllers}
    digests = []
    for k in range(n_runs):
        digest, rows = results[k]
        digests.append(digest)
        for name in controllers:
            per_run[name].append(rows[name])

    aggregate: dict[str, dict[str, dict[str, float]]] = {}
    collision_runs = {}
    collision_pairs_total = {}
    infeasible_runs = {}
    gridlock_runs = {}
    for name in controllers:
        rows = per_run[name]
        aggregate[name] = {}
        for key in METRIC_KEYS + ("h0_min_m2",):
            vals = np.array([r[key] for r in rows], dtype=float)
            aggregate[name][key] = {
                "mean": float(np.mean(vals)),
                "std": float(np.std(vals)),
            }
        collision_runs[name] = sum(1 for r in rows if r["collisions"] > 0)
        collision_pairs_total[name] = sum(r["collisions"] for r in rows)
        infeasible_runs[name] = sum(1 for r in rows if r["infeasible_count"] > 0)
        gridlock_runs[name] = sum(1 for r in rows if r["gridlock"])

    percent = {}
    if "fifo" in controllers:
        base = {key: aggregate["fifo"][key]["mean"] for key in METRIC_KEYS}
        for name in controllers:
            if name == "fifo":
                continue
            percent[name] = {
                key: 100.0 * (aggregate[name][key]["mean"] - base[key]) / base[key]
                for key in METRIC_KEYS
                if base[key] != 0.0 and math.isfinite(base[key])
            }

    summary = BatchSummary(
        controllers=controllers,
        runs=n_runs,
        per_run=per_run,
        aggregate=aggregate,
        percent_change_vs_fifo=percent,
        collision_runs=collision_runs,
        collision_pairs_total=collision_pairs_total,
        infeasible_runs=infeasible_runs,
        scenario_digests=digests,
        gridlock_runs=gridlock_runs,
    )
    if out_dir is not None:
        write_outputs(summary, out_dir)
    return summary


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_outputs(summary: BatchSummary, out_dir, bins: int = 20) -> None:
    os.makedirs(out_dir, exist_ok=True)
    doc = {
        "controllers": list(summary.controllers),
        "runs": summary.runs,
        "aggregate": summary.aggregate,
        "percent_change_vs_fifo": summary.percent_change_vs_fifo,
        "collision_runs": summary.collision_runs,
        "collision_pairs_total": summary.collision_pairs_total,
        "infeasible_runs": summary.infeasible_runs,
        "gridlock_runs": summary.gridlock_runs,
        "scenario_digests": summary.scenario_digests,
        "per_run": {
            name: [{k: _json_safe(v) for k, v in row.items()} for row in rows]
            for name, rows in summary.per_run.items()
        },
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")

    with open(os.path.join(out_dir, "aggregate.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["controller", "run"] + list(HIST_KEYS) + ["collisions", "infeasible_count", "gridlock"])
        for name in summary.controllers:
            for k, row in enumerate(summary.per_run[name]):
                w.writerow([name, k] + [row[key] for key in HIST_KEYS]
                           + [row["collisions"], row["infeasible_count"], int(row["gridlock"])])

    emit_histograms(summary, out_dir, bins=bins)


def emit_histograms(summary: BatchSummary, out_dir, bins: int = 20) -> list[str]:
    """One binned-count CSV per metric per controller; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name in summary.controllers:
        rows = summary.per_run[name]
        for key in HIST_KEYS:
            vals = np.array([r[key] for r in rows], dtype=float)
            vals = vals[np.isfinite(vals)]
            if vals.size == 0:
                continue
            counts, edges = np.histogram(vals, bins=bins)
            path = os.path.join(out_dir, f"hist_{key}_{name}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["bin_lo", "bin_hi", "count"])
                for b in range(counts.shape[0]):
                    w.writerow([repr(float(edges[b])), repr(float(edges[b + 1])), int(counts[b])])
            written.append(path)
    return written
