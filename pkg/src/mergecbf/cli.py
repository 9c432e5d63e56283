"""Command-line front end: demo scenario, Monte Carlo batches, fault campaign,
tuning tables, self-verification, and the backend benchmark.

Exit codes: 0 success, 1 failed checks or I/O errors, 2 gridlock detected.
The output directory resolves as --out-dir, else $MERGECBF_OUT_DIR, else ./out.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import batch as batch_mod
from . import config as config_mod
from . import metrics as metrics_mod
from . import qp, tuning, verification
from .config import DEMO4_NAMES, demo_four_vehicle
from .controllers import make_controller
from .simulation import run_scenario

ALL_CONTROLLERS = ("fifo", "dpc", "ccbf")


def _out_dir(args) -> str:
    if args.out_dir:
        return args.out_dir
    return os.environ.get("MERGECBF_OUT_DIR", "out")


def _load_cfg(args) -> config_mod.ScenarioConfig:
    cfg = config_mod.load_config(args.config) if args.config else config_mod.default_config()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "runs", None) is not None:
        cfg.runs = args.runs
    return cfg


def _controllers(args) -> tuple[str, ...]:
    names = tuple(s.strip() for s in args.controllers.split(",") if s.strip())
    for name in names:
        if name not in ALL_CONTROLLERS:
            raise SystemExit(f"unknown controller {name!r}; choose from {ALL_CONTROLLERS}")
    return names


def cmd_demo4(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    scenario = demo_four_vehicle(cfg)
    rc = 0
    for name in _controllers(args):
        controller = make_controller(name, cfg.gains_for(name), scenario.net,
                                     scenario.desired_speed_by_id())
        t0 = time.perf_counter()
        log = run_scenario(scenario, controller)
        elapsed = time.perf_counter() - t0
        report = metrics_mod.compute_report(log, scenario.params_by_id())
        order = [DEMO4_NAMES[vid] for vid, _ in
                 sorted(log.merge_cross_time.items(), key=lambda kv: kv[1])]
        log.write_csv(os.path.join(out, f"demo4_{name}.csv"))
        print(f"[{name}] merge order {'-'.join(order)}   "
              f"min speed {float(np.min(log.speed)):.2f} m/s   "
              f"h0_min {report.h0_min_m2:.2f} m^2   "
              f"collisions {report.collisions}   "
              f"infeasible {report.infeasible_count}   ({elapsed:.2f} s)")
        if report.gridlock:
            rc = 2
    return rc


def cmd_mc(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    summary = batch_mod.run_batch(
        cfg, controllers=_controllers(args), workers=args.workers,
        out_dir=out, save_logs=args.save_logs,
    )
    _print_summary(summary)
    return 2 if summary.any_gridlock else 0


def cmd_fault_mc(args) -> int:
    cfg = _load_cfg(args)
    if args.runs is None:
        cfg.runs = 100
    out = _out_dir(args)
    summary = batch_mod.run_batch(
        cfg, controllers=_controllers(args), workers=args.workers,
        out_dir=out, save_logs=args.save_logs, fault_campaign=True,
    )
    for name in summary.controllers:
        print(f"[{name}] collision runs: {summary.collision_runs[name]} / {summary.runs}")
    return 2 if summary.any_gridlock else 0


def _print_summary(summary) -> None:
    print(f"runs: {summary.runs}   controllers: {', '.join(summary.controllers)}")
    for name in summary.controllers:
        agg = summary.aggregate[name]
        print(f"[{name}] TEL {agg['tel_whpkm']['mean']:.1f} Wh/km   "
              f"PaKE {agg['pake_whpkm']['mean']:.1f}   BE {agg['be_whpkm']['mean']:.1f}   "
              f"travel {agg['travel_time_s']['mean']:.2f} s   "
              f"speed {agg['avg_speed_mps']['mean']:.2f} m/s   "
              f"collision runs {summary.collision_runs[name]}   "
              f"infeasible runs {summary.infeasible_runs[name]}")
    for name, pct in summary.percent_change_vs_fifo.items():
        rendered = "   ".join(f"{k} {v:+.1f}%" for k, v in pct.items())
        print(f"[{name} vs fifo] {rendered}")


def cmd_tuning(args) -> int:
    kappas = np.linspace(args.kappa_min, args.kappa_max, args.kappa_steps)
    d = 2.0 * (1.0 + args.beta) * args.radius
    v0_norm = args.speed * np.sqrt(2.0)
    rows = tuning.kappa_table(v0_norm, d, kappas)
    lines = ["kappa_1ps,stable_eig_1ps,unstable_eig_1ps"]
    lines += [f"{k!r},{s!r},{u!r}" for k, s, u in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify(args) -> int:
    results = verification.run_all(oracle_cases=args.cases)
    ok = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
        ok = ok and res.passed
    return 0 if ok else 1


def cmd_bench(args) -> int:
    cores = qp.available_cores()
    print(f"active backend: {qp.BACKEND}")
    rng = np.random.default_rng(5)
    sizes = [(4, 10), (10, 60), (20, 230)]
    problems = []
    for n, m in sizes:
        batch = []
        for _ in range(args.problems):
            h = rng.uniform(2.0, 8.0, size=n)
            c = -2.0 * rng.uniform(17.0, 25.0, size=n) * h / 2.0
            G = rng.normal(0.0, 20.0, size=(m, n))
            g = rng.normal(-200.0, 150.0, size=m)
            batch.append((h, c, G, g))
        problems.append(((n, m), batch))

    for (n, m), batch in problems:
        line = f"n={n:3d} rows={m:3d}:"
        for name, core in cores.items():
            t0 = time.perf_counter()
            for h, c, G, g in batch:
                core(h, c, G, g, None, 200, 1e-9)
            per = (time.perf_counter() - t0) / len(batch)
            line += f"   {name} {per * 1e6:8.1f} us/solve"
        print(line)

    if len(cores) == 2:
        worst = 0.0
        for _, batch in problems:
            for h, c, G, g in batch:
                u_a, _, _, st_a, _ = cores["python"](h, c, G, g, None, 200, 1e-9)
                u_b, _, _, st_b, _ = cores["cython"](h, c, G, g, None, 200, 1e-9)
                if st_a == 0 and st_b == 0:
                    worst = max(worst, float(np.max(np.abs(u_a - u_b))))
        print(f"cross-backend max |du|: {worst:.2e}")

    cfg = config_mod.default_config()
    scenario = demo_four_vehicle(cfg)
    controller = make_controller("dpc", cfg.gains_for("dpc"), scenario.net,
                                 scenario.desired_speed_by_id())
    t0 = time.perf_counter()
    run_scenario(scenario, controller)
    print(f"demo4 dpc wall time ({qp.BACKEND} backend): {time.perf_counter() - t0:.2f} s")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mergecbf",
                                     description="CBF-based merge control simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs_default=None):
        p.add_argument("--config", help="scenario config file (INI)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--runs", type=int, default=runs_default)
        p.add_argument("--out-dir", default=None)
        p.add_argument("--workers", type=int, default=max(1, (os.cpu_count() or 2) - 0))
        p.add_argument("--save-logs", action="store_true",
                       help="write per-run CSV logs under runs/<controller>/")

    p = sub.add_parser("demo4", help="four-vehicle nearly-symmetric example")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--controllers", default="dpc,fifo")
    p.set_defaults(func=cmd_demo4)

    p = sub.add_parser("mc", help="nominal Monte Carlo batch")
    common(p)
    p.add_argument("--controllers", default=",".join(ALL_CONTROLLERS))
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("fault-mc", help="power-loss robustness campaign")
    common(p)
    p.add_argument("--controllers", default="dpc,ccbf")
    p.set_defaults(func=cmd_fault_mc)

    p = sub.add_parser("tuning", help="contested-mode eigenvalue table")
    p.add_argument("--kappa-min", type=float, default=0.05)
    p.add_argument("--kappa-max", type=float, default=5.0)
    p.add_argument("--kappa-steps", type=int, default=25)
    p.add_argument("--speed", type=float, default=22.5, help="per-lane desired speed m/s")
    p.add_argument("--radius", type=float, default=3.0)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_tuning)

    p = sub.add_parser("verify", help="QP oracle and invariant self-checks")
    p.add_argument("--cases", type=int, default=1000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="compare solver backends")
    p.add_argument("--problems", type=int, default=200)
    p.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
