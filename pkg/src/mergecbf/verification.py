"""Self-check suites: brute-force QP oracle and library invariants.

The oracle solves small QPs by exhaustive active-set enumeration: every
independent subset of constraint rows (size <= n) is solved as an equality
system in closed form, candidates are filtered for primal feasibility, and
the lowest-objective candidate is the optimum. It shares no code with the
iterative solver, so agreement is meaningful evidence. The `verify` CLI
subcommand runs these suites and reports one PASS/FAIL line each.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import qp
from .config import default_config, demo_four_vehicle, sample_scenario
from .controllers import make_controller
from .simulation import run_scenario


def stack_problem(problem: qp.QpProblem):
    """Public stacked view (rows, rhs) including bounds, for oracle consumption."""
    p = qp._expand_slack(problem) if problem.slack_weight is not None else problem
    G, g, kept = qp._stack(p)
    return G, g, kept


def brute_force_qp(h, c, G, g, feas_tol: float = 1e-8):
    """Enumeration oracle: returns (u, status) for min 0.5 u'diag(h)u + c'u, Gu >= g."""
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    g = np.asarray(g, dtype=float)
    n = h.shape[0]
    m = g.shape[0]
    inv_h = 1.0 / h

    def objective(u):
        return 0.5 * float(u * h @ u) + float(c @ u)

    best_u = None
    best_obj = math.inf
    for size in range(min(n, m) + 1):
        for subset in itertools.combinations(range(m), size):
            if size == 0:
                u = -c * inv_h
            else:
                ga = G[list(subset)]
                k = ga @ (ga * inv_h).T
                rhs = g[list(subset)] + ga @ (c * inv_h)
                try:
                    lam = np.linalg.solve(k, rhs)
                except np.linalg.LinAlgError:
                    continue
                if abs(np.linalg.det(k)) < 1e-12:
                    continue
                u = (lam @ ga - c) * inv_h
            if m and np.min(G @ u - g) < -feas_tol:
                continue
            obj = objective(u)
            if obj < best_obj - 1e-12:
                best_obj = obj
                best_u = u
    if best_u is None:
        return None, qp.QpStatus.INFEASIBLE
    return best_u, qp.QpStatus.OPTIMAL


def random_problem(rng: np.random.Generator) -> qp.QpProblem:
    """Small random QP in the oracle-checkable regime (n <= 4, <= 6 rows)."""
    n = int(rng.integers(2, 5))
    m = int(rng.integers(0, 7))
    h = rng.uniform(0.5, 3.0, size=n)
    c = rng.normal(0.0, 5.0, size=n)
    G = rng.normal(0.0, 1.0, size=(m, n))
    g = rng.normal(0.0, 2.0, size=m)
    lower = np.where(rng.random(n) < 0.5, rng.uniform(-5.0, 0.0, size=n), -np.inf)
    upper = np.where(rng.random(n) < 0.5, rng.uniform(0.0, 5.0, size=n), np.inf)
    return qp.QpProblem(h, c, G, g, lower, upper)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def qp_oracle_suite(cases: int = 1000, seed: int = 20240, tol: float = 1e-7) -> CheckResult:
    """Seeded random problems against the enumeration oracle."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    mismatches = 0
    kkt_worst = 0.0
    for _ in range(cases):
        problem = random_problem(rng)
        sol = qp.solve(problem)
        G, g, _ = stack_problem(problem)
        u_ref, status_ref = brute_force_qp(problem.hessian_diag, problem.linear_cost, G, g)
        if status_ref == qp.QpStatus.INFEASIBLE:
            if sol.status != qp.QpStatus.INFEASIBLE:
                mismatches += 1
            continue
        if sol.status != qp.QpStatus.OPTIMAL:
            mismatches += 1
            continue
        worst = max(worst, float(np.max(np.abs(sol.u - u_ref))))
        kkt_worst = max(kkt_worst, max(qp.kkt_residuals(problem, sol)))
    passed = mismatches == 0 and worst < tol and kkt_worst <= qp.KKT_TOL
    return CheckResult(
        "qp-oracle",
        passed,
        f"{cases} cases, {mismatches} status mismatches, max |u - u_ref| = {worst:.2e}, "
        f"max KKT residual = {kkt_worst:.2e}",
    )


def replay_determinism_check() -> CheckResult:
    """Identical seed and config must yield bit-identical logs."""
    cfg = default_config()
    cfg = type(cfg)(**{**cfg.__dict__, "vehicles_per_lane": 3})
    scenario = sample_scenario(cfg, 0)
    logs = []
    for _ in range(2):
        controller = make_controller("dpc", cfg.gains_for("dpc"), scenario.net,
                                     scenario.desired_speed_by_id())
        logs.append(run_scenario(scenario, controller))
    a, b = logs
    same = (
        np.array_equal(a.s, b.s)
        and np.array_equal(a.speed, b.speed)
        and np.array_equal(a.u_cmd, b.u_cmd)
        and np.array_equal(a.accel, b.accel)
        and np.array_equal(a.step_min_h0, b.step_min_h0)
    )
    return CheckResult("replay-determinism", same,
                       "replayed log is bit-identical" if same else "logs diverged")


def ledger_diagonal_check() -> CheckResult:
    """Hosts never hold a disturbance estimate about themselves."""
    cfg = default_config()
    scenario = demo_four_vehicle(cfg)
    controller = make_controller("dpc", cfg.gains_for("dpc"), scenario.net,
                                 scenario.desired_speed_by_id())
    run_scenario(scenario, controller)
    bad = [vid for vid, ledger in controller.ledgers.items() if vid in ledger.w]
    return CheckResult("ledger-diagonal", not bad,
                       "w_hat[i|i] entries absent (identically zero)" if not bad
                       else f"hosts with self-estimates: {bad}")


def demo_feasibility_check() -> CheckResult:
    """The four-vehicle example runs clean: no flags, no collisions."""
    cfg = default_config()
    scenario = demo_four_vehicle(cfg)
    controller = make_controller("dpc", cfg.gains_for("dpc"), scenario.net,
                                 scenario.desired_speed_by_id())
    log = run_scenario(scenario, controller)
    ok = not log.infeasible_events and not log.collision_pairs and not log.gridlock
    return CheckResult("demo-feasibility", ok,
                       f"infeasible={len(log.infeasible_events)}, "
                       f"collisions={len(log.collision_pairs)}, gridlock={log.gridlock}")


def warm_start_check(cases: int = 200, seed: int = 7) -> CheckResult:
    """Warm and cold solves agree to 1e-9 on random problems."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        problem = random_problem(rng)
        cold = qp.solve(problem)
        if cold.status != qp.QpStatus.OPTIMAL:
            continue
        warm = qp.solve(problem, warm_start=cold.active_set)
        worst = max(worst, float(np.max(np.abs(cold.u - warm.u))))
        scrambled = qp.solve(problem, warm_start=tuple(rng.permutation(len(cold.multipliers))[:3]))
        if scrambled.status == qp.QpStatus.OPTIMAL:
            worst = max(worst, float(np.max(np.abs(cold.u - scrambled.u))))
    return CheckResult("warm-start", worst < 1e-9, f"max warm/cold gap = {worst:.2e}")


def run_all(oracle_cases: int = 1000) -> list[CheckResult]:
    return [
        qp_oracle_suite(cases=oracle_cases),
        warm_start_check(),
        replay_determinism_check(),
        ledger_diagonal_check(),
        demo_feasibility_check(),
    ]
