"""Merging controllers: decentralized predictor-corrector CBF (DPC-CBF),
centralized CBF (C-CBF), and priority-ordered FIFO.

DPC-CBF: each host solves one QP over velocity commands for *every* control-
zone member, tracking its own desired speed and everyone else's current speed,
with a mass-scaled acceleration penalty making the Hessian diagonal. Barrier
rows carry low-pass-filtered disturbance estimates w_hat[j|host] (the gap
between what the host planned for agent j and what j actually did) so hosts
absorb responsibility for non-cooperative agents. The host enacts only its own
component.

C-CBF: the same QP solved once with exact desired speeds for all agents and
no disturbance terms.

FIFO: each vehicle is a double integrator commanded in acceleration, tracking
a proportional speed law, with slack-relaxed barrier rows against every
higher-priority vehicle (priority = control-zone entry order).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry, qp
from .constraints import BarrierGains, build_pair_table

LBS_TO_KG = 0.45359237
M_BASE_KG = 2375.0 * LBS_TO_KG
# Mass-penalty scale chosen so alpha * mass = 1.7 at the fleet-average mass
# (midpoint of the base..4x base range), placing the contested two-vehicle
# mode's unstable eigenvalue at 1.7 1/s for fleet-average size and speed.
DEFAULT_ALPHA = 1.7 / (2.5 * M_BASE_KG)

_ZERO_B_TOL = 1e-12


@dataclass(frozen=True)
class ControllerGains:
    """Everything a controller needs besides the snapshot itself."""

    barrier: BarrierGains
    tau_w: float = 0.4
    alpha: float = DEFAULT_ALPHA
    slack_weight: float | None = None
    ts: float = 0.1
    a_min: float = -6.0
    a_max: float = 5.0
    disturbance_mode: str = "euler"  # "euler" or "filtered" w_hat update
    speed_gain: float = 0.5  # FIFO baseline acceleration law k_v

    def __post_init__(self):
        if self.tau_w <= 0.0 or self.ts <= 0.0:
            raise ValueError("tau_w and ts must be positive")
        if self.alpha < 0.0:
            raise ValueError("alpha must be nonnegative")
        if self.disturbance_mode not in ("euler", "filtered"):
            raise ValueError(f"unknown disturbance_mode {self.disturbance_mode!r}")


@dataclass
class Snapshot:
    """Immutable per-step view of the control zone (the 10 Hz broadcast state).

    ``accel`` is each vehicle's realized acceleration over the previous step,
    as carried in its broadcast; hosts use it to reconstruct implemented
    commands without privileged access.
    """

    ids: np.ndarray
    lane: np.ndarray
    s: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    radius: np.ndarray
    mass: np.ndarray
    entry_time: np.ndarray
    faulted: np.ndarray

    @property
    def n(self) -> int:
        return self.ids.shape[0]

    def priority_order(self) -> np.ndarray:
        """Control-zone entry order; ties broken by vehicle id."""
        return np.lexsort((self.ids, self.entry_time))


@dataclass
class StepCommands:
    """Controller output for one step, aligned with the snapshot order."""

    values: np.ndarray
    kind: str  # "velocity" (filtered command) or "accel"
    infeasible_ids: list = field(default_factory=list)


class DisturbanceLedger:
    """One host's filtered disturbance estimates w_hat[j|host].

    The host's own entry is identically zero and never stored. Entries are
    created at zero when a vehicle enters the host's view and dropped when it
    leaves. Two update modes:

    - "euler": explicit Euler on  w_hat' = (-w_hat + u_j - u*_j|host)/tau_w,
      with u_j reconstructed from broadcast speed and acceleration through the
      command filter (u = v_prev + tau_f * a).
    - "filtered": w_hat = v_j - lowpass(u*_j|host), valid when tau_w == tau_f;
      needs no acceleration data.
    """

    def __init__(self, host_id: int, mode: str = "euler"):
        self.host_id = int(host_id)
        self.mode = mode
        self.w: dict[int, float] = {}
        self._u_est: dict[int, float] = {}
        self._u_filt: dict[int, float] = {}

    def advance(self, snap: Snapshot, gains: ControllerGains) -> None:
        """Fold the latest observations into the estimates (call before solving)."""
        tau_f = gains.barrier.tau_f
        ids = snap.ids
        current = set()
        for idx in range(snap.n):
            j = int(ids[idx])
            if j == self.host_id:
                continue
            current.add(j)
            if self.mode == "euler":
                if j in self._u_est:
                    v_prev = snap.speed[idx] - snap.accel[idx] * gains.ts
                    u_obs = v_prev + tau_f * snap.accel[idx]
                    w = self.w[j]
                    self.w[j] = w + (gains.ts / gains.tau_w) * (-w + u_obs - self._u_est[j])
                else:
                    self.w[j] = 0.0
            else:
                if j in self._u_filt:
                    self.w[j] = float(snap.speed[idx]) - self._u_filt[j]
                else:
                    self.w[j] = 0.0
        for j in list(self.w):
            if j not in current:
                self.w.pop(j)
                self._u_est.pop(j, None)
                self._u_filt.pop(j, None)

    def record(self, snap: Snapshot, estimates: np.ndarray, gains: ControllerGains) -> None:
        """Store this step's per-agent command estimates (call after solving)."""
        for idx in range(snap.n):
            j = int(snap.ids[idx])
            if j == self.host_id:
                continue
            if self.mode == "euler":
                self._u_est[j] = float(estimates[idx])
            else:
                prev = self._u_filt.get(j, float(snap.speed[idx]))
                self._u_filt[j] = prev + (gains.ts / gains.tau_w) * (-prev + float(estimates[idx]))

    def w_vector(self, ids: np.ndarray) -> np.ndarray:
        return np.array([self.w.get(int(j), 0.0) for j in ids])


@dataclass
class SharedStep:
    """Per-step quantities common to every host's QP (geometry never depends
    on who is planning; only the disturbance shifts and cost centers do)."""

    pairs: object  # PairTable after degenerate-row removal
    G: np.ndarray  # stacked rows: pair rows, then +I / -I bound rows
    lb: np.ndarray
    ub: np.ndarray
    hessian: np.ndarray
    cost_base: np.ndarray  # cost vector when every agent tracks current speed
    overlap_infeasible: bool  # a fully degenerate row demands the impossible


def precompute_step(snap: Snapshot, gains: ControllerGains, net: geometry.RoadNetwork) -> SharedStep:
    pos, vel, head = geometry.planar_states(snap.lane, snap.s, snap.speed, net)
    pairs = build_pair_table(pos, vel, head, snap.radius, gains.barrier)

    zero = (np.abs(pairs.b_first) <= _ZERO_B_TOL) & (np.abs(pairs.b_second) <= _ZERO_B_TOL)
    overlap_infeasible = False
    if np.any(zero):
        overlap_infeasible = bool(np.any(-pairs.a_term[zero] > qp.FEAS_TOL))
        keep = ~zero
        pairs.iu = pairs.iu[keep]
        pairs.ju = pairs.ju[keep]
        pairs.a_term = pairs.a_term[keep]
        pairs.b_first = pairs.b_first[keep]
        pairs.b_second = pairs.b_second[keep]
        pairs.h = pairs.h[keep]
        pairs.h0 = pairs.h0[keep]

    n = snap.n
    p = pairs.count
    G = np.zeros((p + 2 * n, n))
    rows = np.arange(p)
    G[rows, pairs.iu] = pairs.b_first
    G[rows, pairs.ju] = -pairs.b_second
    G[p : p + n, :] = np.eye(n)
    G[p + n :, :] = -np.eye(n)

    tau_f = gains.barrier.tau_f
    lb = snap.speed + tau_f * gains.a_min
    ub = snap.speed + tau_f * gains.a_max
    weight = 1.0 + gains.alpha * snap.mass
    hessian = 2.0 * weight
    cost_base = -2.0 * snap.speed * weight
    return SharedStep(pairs, G, lb, ub, hessian, cost_base, overlap_infeasible)


def _stacked_rhs(shared: SharedStep, w: np.ndarray | None) -> np.ndarray:
    pairs = shared.pairs
    g = np.empty(shared.G.shape[0])
    p = pairs.count
    if w is None:
        g[:p] = -pairs.a_term
    else:
        g[:p] = -(pairs.a_term + pairs.b_first * w[pairs.iu] - pairs.b_second * w[pairs.ju])
    n = shared.lb.shape[0]
    g[p : p + n] = shared.lb
    g[p + n :] = -shared.ub
    return g


@dataclass
class HostPlan:
    u_host: float
    estimates: np.ndarray
    feasible: bool
    active_set: np.ndarray


def dpc_cbf_step(
    host_id: int,
    snap: Snapshot,
    host_desired_speed: float,
    ledger: DisturbanceLedger,
    gains: ControllerGains,
    net: geometry.RoadNetwork,
    shared: SharedStep | None = None,
    warm=None,
) -> HostPlan:
    """One host's planning step: estimate update, QP solve, estimate storage.

    Returns the host's own command plus its estimates for everyone (aligned
    with the snapshot). On an infeasible QP the host falls back to maximum
    braking and flags the event; its estimates degrade to "everyone holds
    speed" so the ledger keeps operating.
    """
    idx = int(np.flatnonzero(snap.ids == host_id)[0])
    if shared is None:
        shared = precompute_step(snap, gains, net)

    ledger.advance(snap, gains)
    w = ledger.w_vector(snap.ids)

    cost = shared.cost_base.copy()
    cost[idx] = -2.0 * (host_desired_speed + gains.alpha * snap.mass[idx] * snap.speed[idx])
    g = _stacked_rhs(shared, w)

    if shared.overlap_infeasible:
        status = qp.QpStatus.INFEASIBLE
        u = snap.speed.copy()
        active = np.empty(0, dtype=np.int32)
    else:
        u, _, active, status, _ = qp.solve_stacked(shared.hessian, cost, shared.G, g, warm)

    if status != qp.QpStatus.OPTIMAL:
        estimates = snap.speed.copy()
        ledger.record(snap, estimates, gains)
        u_brake = float(snap.speed[idx] + gains.barrier.tau_f * gains.a_min)
        return HostPlan(u_brake, estimates, False, np.empty(0, dtype=np.int32))

    ledger.record(snap, u, gains)
    return HostPlan(float(u[idx]), u, True, active)


def c_cbf_step(
    snap: Snapshot,
    desired_speeds: np.ndarray,
    gains: ControllerGains,
    net: geometry.RoadNetwork,
    shared: SharedStep | None = None,
    warm=None,
) -> tuple[np.ndarray, bool, np.ndarray]:
    """Single global QP with exact desired speeds and no disturbance terms."""
    if shared is None:
        shared = precompute_step(snap, gains, net)
    weight = gains.alpha * snap.mass
    cost = -2.0 * (np.asarray(desired_speeds, dtype=float) + weight * snap.speed)
    g = _stacked_rhs(shared, None)

    if not shared.overlap_infeasible:
        u, _, active, status, _ = qp.solve_stacked(shared.hessian, cost, shared.G, g, warm)
        if status == qp.QpStatus.OPTIMAL:
            return u, True, active
    u_brake = snap.speed + gains.barrier.tau_f * gains.a_min
    return u_brake, False, np.empty(0, dtype=np.int32)


def fifo_step(
    snap: Snapshot,
    desired_speeds: np.ndarray,
    gains: ControllerGains,
    net: geometry.RoadNetwork,
) -> np.ndarray:
    """Per-vehicle acceleration commands under entry-order priority.

    Each vehicle minimizes deviation from a proportional speed-tracking
    acceleration plus a heavily weighted quadratic slack per barrier row, so
    the per-vehicle QP is always feasible. Rows are generated only against
    higher-priority vehicles; lower-priority accelerations are treated as
    zero.
    """
    if gains.slack_weight is None:
        raise ValueError("FIFO requires a slack weight")
    pos, vel, head = geometry.planar_states(snap.lane, snap.s, snap.speed, net)
    order = snap.priority_order()
    bg = gains.barrier
    accel = np.empty(snap.n)
    m_slack = 2.0 * gains.slack_weight

    for rank in range(snap.n):
        k = order[rank]
        a0 = float(np.clip(gains.speed_gain * (desired_speeds[k] - snap.speed[k]),
                           gains.a_min, gains.a_max))
        preds = order[:rank]
        if preds.size == 0:
            accel[k] = a0
            continue
        xi = pos[k] - pos[preds]
        dv = vel[k] - vel[preds]
        rsum = snap.radius[k] + snap.radius[preds]
        d = (1.0 + bg.beta) * rsum
        h = np.einsum("ij,ij->i", xi, xi) - d * d
        a_term = (
            2.0 * np.einsum("ij,ij->i", dv, dv)
            + 2.0 * bg.l1 * np.einsum("ij,ij->i", xi, dv)
            + bg.l0 * h
        )
        b = 2.0 * (xi @ head[k])

        # variables [a, slack_1..slack_R]; rows  b_r a + slack_r >= -A_r
        r = preds.size
        nvar = 1 + r
        hess = np.full(nvar, m_slack)
        hess[0] = 2.0
        cost = np.zeros(nvar)
        cost[0] = -2.0 * a0
        rows = np.zeros((r + 2 + r, nvar))
        rhs = np.empty(r + 2 + r)
        rows[:r, 0] = b
        rows[np.arange(r), 1 + np.arange(r)] = 1.0
        rhs[:r] = -a_term
        rows[r, 0] = 1.0
        rhs[r] = gains.a_min
        rows[r + 1, 0] = -1.0
        rhs[r + 1] = -gains.a_max
        rows[r + 2 :, 1:] = np.eye(r)
        rhs[r + 2 :] = 0.0
        u, _, _, status, _ = qp.solve_stacked(hess, cost, rows, rhs)
        accel[k] = u[0] if status == qp.QpStatus.OPTIMAL else gains.a_min
    return accel


class DpcCbfController:
    """Stateful per-host orchestration of `dpc_cbf_step` for a whole scenario."""

    name = "dpc"
    command_kind = "velocity"

    def __init__(self, gains: ControllerGains, net: geometry.RoadNetwork,
                 desired_speed_by_id: dict[int, float]):
        self.gains = gains
        self.net = net
        self.desired = desired_speed_by_id
        self.ledgers: dict[int, DisturbanceLedger] = {}
        self._warm: dict[int, np.ndarray] = {}
        self._members: dict[int, tuple] = {}

    def step(self, t: float, snap: Snapshot) -> StepCommands:
        shared = precompute_step(snap, self.gains, self.net)
        members = tuple(int(j) for j in snap.ids)
        values = np.empty(snap.n)
        infeasible = []
        for idx in range(snap.n):
            vid = int(snap.ids[idx])
            if snap.faulted[idx]:
                # a powerless vehicle plans nothing; its broadcast keeps flowing
                values[idx] = snap.speed[idx]
                continue
            ledger = self.ledgers.get(vid)
            if ledger is None:
                ledger = DisturbanceLedger(vid, self.gains.disturbance_mode)
                self.ledgers[vid] = ledger
            warm = self._warm.get(vid) if self._members.get(vid) == members else None
            plan = dpc_cbf_step(vid, snap, self.desired[vid], ledger, self.gains,
                                self.net, shared, warm)
            values[idx] = plan.u_host
            self._warm[vid] = plan.active_set
            self._members[vid] = members
            if not plan.feasible:
                infeasible.append(vid)
        return StepCommands(values, "velocity", infeasible)


class CentralizedController:
    name = "ccbf"
    command_kind = "velocity"

    def __init__(self, gains: ControllerGains, net: geometry.RoadNetwork,
                 desired_speed_by_id: dict[int, float]):
        self.gains = gains
        self.net = net
        self.desired = desired_speed_by_id
        self._warm: np.ndarray | None = None
        self._members: tuple = ()

    def step(self, t: float, snap: Snapshot) -> StepCommands:
        members = tuple(int(j) for j in snap.ids)
        warm = self._warm if members == self._members else None
        v0 = np.array([self.desired[int(j)] for j in snap.ids])
        u, feasible, active = c_cbf_step(snap, v0, self.gains, self.net, warm=warm)
        self._warm = active
        self._members = members
        return StepCommands(u, "velocity", [] if feasible else [int(j) for j in snap.ids])


class FifoController:
    name = "fifo"
    command_kind = "accel"

    def __init__(self, gains: ControllerGains, net: geometry.RoadNetwork,
                 desired_speed_by_id: dict[int, float]):
        self.gains = gains
        self.net = net
        self.desired = desired_speed_by_id

    def step(self, t: float, snap: Snapshot) -> StepCommands:
        v0 = np.array([self.desired[int(j)] for j in snap.ids])
        return StepCommands(fifo_step(snap, v0, self.gains, self.net), "accel", [])


CONTROLLER_CLASSES = {
    "dpc": DpcCbfController,
    "ccbf": CentralizedController,
    "fifo": FifoController,
}


def make_controller(name: str, gains: ControllerGains, net: geometry.RoadNetwork,
                    desired_speed_by_id: dict[int, float]):
    try:
        cls = CONTROLLER_CLASSES[name]
    except KeyError:
        raise ValueError(f"unknown controller {name!r}; expected one of {sorted(CONTROLLER_CLASSES)}")
    return cls(gains, net, desired_speed_by_id)
