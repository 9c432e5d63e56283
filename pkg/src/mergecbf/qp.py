"""Dense convex QP interface with a compiled core and a numpy fallback.

Problems have the form

    min  0.5 * u' diag(h) u + c' u
    s.t. G u >= g,  lower <= u <= upper

with strictly positive diagonal Hessian. When ``slack_weight`` M is set, every
general inequality row is relaxed by its own nonnegative slack penalized by
M * slack^2, which keeps the problem a QP and guarantees feasibility (variable
bounds stay hard).

Constraint indices reported in ``QpSolution.active_set`` (and accepted as warm
starts) live in a fixed stacked space: general rows first, then one lower- and
one upper-bound slot per variable of the (possibly slack-expanded) problem.

The iteration core is selected at import: the Cython extension
``mergecbf._qp_fast`` when available, else the pure-numpy ``mergecbf._qp_py``.
Set MERGECBF_QP_BACKEND=python (or cython) to force one.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field

import numpy as np

from . import _qp_py

MAX_VARIABLES = 64
DEFAULT_MAX_ITER = 200
FEAS_TOL = 1e-9
KKT_TOL = 1e-8
_ZERO_ROW_TOL = 1e-14

_requested = os.environ.get("MERGECBF_QP_BACKEND", "").strip().lower()
if _requested in ("", "cython", "fast"):
    try:
        from ._qp_fast import solve_core as _solve_core  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        if _requested:
            raise
        _solve_core = _qp_py.solve_core
        BACKEND = "python"
elif _requested in ("python", "py", "numpy"):
    _solve_core = _qp_py.solve_core
    BACKEND = "python"
else:
    raise ValueError(f"unknown MERGECBF_QP_BACKEND={_requested!r}")


def available_cores() -> dict:
    """Name -> solve_core callable for every importable backend (benchmarks)."""
    cores = {"python": _qp_py.solve_core}
    try:
        from ._qp_fast import solve_core as fast_core  # type: ignore[attr-defined]

        cores["cython"] = fast_core
    except ImportError:
        pass
    return cores


class QpStatus(enum.IntEnum):
    OPTIMAL = 0
    INFEASIBLE = 1
    ITERATION_LIMIT = 2


def _as_vec(x, n, name):
    a = np.asarray(x, dtype=float)
    if a.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {a.shape}")
    return a


@dataclass
class QpProblem:
    hessian_diag: np.ndarray
    linear_cost: np.ndarray
    ineq: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    ineq_rhs: np.ndarray = field(default_factory=lambda: np.empty(0))
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    slack_weight: float | None = None

    def __post_init__(self):
        self.hessian_diag = np.asarray(self.hessian_diag, dtype=float)
        n = self.hessian_diag.shape[0]
        if n > MAX_VARIABLES:
            raise ValueError(f"problem has {n} variables, cap is {MAX_VARIABLES}")
        if np.any(self.hessian_diag <= 0.0):
            raise ValueError("hessian_diag must be strictly positive")
        self.linear_cost = _as_vec(self.linear_cost, n, "linear_cost")
        self.ineq = np.asarray(self.ineq, dtype=float).reshape(-1, n) if np.size(self.ineq) else np.empty((0, n))
        self.ineq_rhs = _as_vec(self.ineq_rhs, self.ineq.shape[0], "ineq_rhs")
        self.lower = np.full(n, -np.inf) if self.lower is None else _as_vec(self.lower, n, "lower")
        self.upper = np.full(n, np.inf) if self.upper is None else _as_vec(self.upper, n, "upper")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if self.slack_weight is not None and self.slack_weight <= 0.0:
            raise ValueError("slack_weight must be positive")

    @property
    def n(self) -> int:
        return self.hessian_diag.shape[0]


@dataclass
class QpSolution:
    u: np.ndarray
    status: QpStatus
    active_set: tuple[int, ...]
    multipliers: np.ndarray  # stacked space: general rows, lower bounds, upper bounds
    slack: np.ndarray | None
    iterations: int


def _expand_slack(p: QpProblem) -> QpProblem:
    """Append one slack variable per general row: rows become [G | I] u' >= g."""
    n, m = p.n, p.ineq.shape[0]
    h = np.concatenate([p.hessian_diag, np.full(m, 2.0 * p.slack_weight)])
    c = np.concatenate([p.linear_cost, np.zeros(m)])
    rows = np.hstack([p.ineq, np.eye(m)]) if m else np.empty((0, n + m))
    lower = np.concatenate([p.lower, np.zeros(m)])
    upper = np.concatenate([p.upper, np.full(m, np.inf)])
    return QpProblem(h, c, rows, p.ineq_rhs.copy(), lower, upper, None)


def _stack(p: QpProblem):
    """Build the core's constraint matrix.

    Returns (G, g, kept) where kept[i] is the fixed stacked-space index of
    core row i. Degenerate all-zero general rows are dropped when their rhs is
    nonpositive; a zero row with positive rhs is structurally infeasible and
    signalled with kept=None.
    """
    n, m = p.n, p.ineq.shape[0]
    rows = []
    rhs = []
    kept = []
    if m:
        norms = np.max(np.abs(p.ineq), axis=1)
        for r in range(m):
            if norms[r] <= _ZERO_ROW_TOL:
                if p.ineq_rhs[r] > FEAS_TOL:
                    return None, None, None
                continue
            rows.append(p.ineq[r])
            rhs.append(p.ineq_rhs[r])
            kept.append(r)
    eye = np.eye(n)
    for i in range(n):
        if np.isfinite(p.lower[i]):
            rows.append(eye[i])
            rhs.append(p.lower[i])
            kept.append(m + i)
    for i in range(n):
        if np.isfinite(p.upper[i]):
            rows.append(-eye[i])
            rhs.append(-p.upper[i])
            kept.append(m + n + i)
    G = np.asarray(rows) if rows else np.empty((0, n))
    g = np.asarray(rhs)
    return G, g, kept


def solve_stacked(h, c, G, g, warm=None, max_iter=DEFAULT_MAX_ITER, feas_tol=FEAS_TOL):
    """Low-level entry on pre-stacked arrays; used by the controller hot path.

    Returns (u, multipliers, active_indices, QpStatus, iterations) with
    constraint indices local to the rows of G.
    """
    u, lam, active, status, iters = _solve_core(h, c, G, g, warm, max_iter, feas_tol)
    return u, lam, active, QpStatus(status), iters


def solve(problem: QpProblem, warm_start=None, max_iter: int = DEFAULT_MAX_ITER) -> QpSolution:
    """Solve the QP; warm starts only affect iteration count, never the result."""
    p = _expand_slack(problem) if problem.slack_weight is not None else problem
    G, g, kept = _stack(p)
    if kept is None:
        return QpSolution(
            u=-problem.linear_cost / problem.hessian_diag,
            status=QpStatus.INFEASIBLE,
            active_set=(),
            multipliers=np.zeros(problem.ineq.shape[0] + 2 * problem.n),
            slack=None,
            iterations=0,
        )

    warm_local = None
    if warm_start is not None:
        pos = {full: i for i, full in enumerate(kept)}
        warm_local = np.asarray([pos[w] for w in warm_start if w in pos], dtype=np.int32)

    u_full, lam_local, active_local, status, iters = solve_stacked(
        p.hessian_diag, p.linear_cost, G, g, warm_local, max_iter, FEAS_TOL
    )

    m_stacked = p.ineq.shape[0] + 2 * p.n
    multipliers = np.zeros(m_stacked)
    for i, full in enumerate(kept):
        multipliers[full] = lam_local[i]
    active_full = tuple(sorted(kept[a] for a in active_local))

    n = problem.n
    slack = u_full[n:].copy() if problem.slack_weight is not None else None
    return QpSolution(
        u=u_full[:n].copy(),
        status=status,
        active_set=active_full,
        multipliers=multipliers,
        slack=slack,
        iterations=iters,
    )


def kkt_residuals(problem: QpProblem, sol: QpSolution) -> tuple[float, float, float]:
    """Max-norm residuals of the stationarity, primal, and complementarity blocks.

    Each block is scale-normalized (stationarity by the gradient magnitudes,
    primal rows by 1 + |rhs|, complementarity rows by 1 + |multiplier|) so the
    numbers certify optimality uniformly across problem scales. Evaluated on
    the slack-expanded problem when a slack weight is present, so the reported
    values certify the problem that was actually solved.
    """
    p = _expand_slack(problem) if problem.slack_weight is not None else problem
    if problem.slack_weight is not None:
        if sol.slack is None or sol.slack.shape[0] != problem.ineq.shape[0]:
            raise ValueError("solution carries no slack values for a relaxed problem")
        u = np.concatenate([sol.u, sol.slack])
    else:
        u = np.asarray(sol.u, dtype=float)
    if u.shape[0] != p.n:
        raise ValueError(f"solution dimension {u.shape[0]} != problem dimension {p.n}")

    G, g, kept = _stack(p)
    if kept is None:
        raise ValueError("structurally infeasible problem has no KKT point")
    lam = np.asarray([sol.multipliers[full] for full in kept])

    grad = p.hessian_diag * u + p.linear_cost
    if G.shape[0]:
        pulled = lam @ G
        scale = 1.0 + float(np.max(np.abs(grad)) + np.max(np.abs(pulled)))
        stationarity = float(np.max(np.abs(grad - pulled))) / scale
        residual = G @ u - g
        primal = float(np.max(np.maximum(0.0, -residual) / (1.0 + np.abs(g))))
        complementarity = float(np.max(np.abs(lam * residual) / (1.0 + np.abs(lam))))
    else:
        scale = 1.0 + float(np.max(np.abs(grad))) if p.n else 1.0
        stationarity = (float(np.max(np.abs(grad))) if p.n else 0.0) / scale
        primal = 0.0
        complementarity = 0.0
    return stationarity, primal, complementarity
