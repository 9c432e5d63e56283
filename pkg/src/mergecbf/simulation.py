"""Discrete-time plant stepping, vehicle injection/eviction, fault injection.

Plants are double integrators advanced at fixed Ts. Velocity-commanded
controllers act through a first-order filter, a = (-v + u)/tau_f, clamped to
the acceleration box; acceleration-commanded controllers apply the clamped
command directly. Speeds clamp at zero (a coasting vehicle stops and stays
stopped), and position integrates the trapezoid of velocity so the kinematics
stay exact under both clamps.

A power-loss fault makes a vehicle ignore all commands and decelerate at the
road-load rate -(C0 + C1 v + C2 v^2)/m until standstill; its broadcasts
continue, so other agents see its true motion.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from .controllers import Snapshot


@dataclass(frozen=True)
class VehicleParams:
    """Physical identity: mass, barrier radius, road-load coefficients, setpoint."""

    mass: float
    radius: float
    c0: float
    c1: float
    c2: float
    desired_speed: float

    def __post_init__(self):
        if self.mass <= 0.0 or self.radius <= 0.0:
            raise ValueError("mass and radius must be positive")
        if self.c0 < 0.0 or self.c1 < 0.0 or self.c2 < 0.0 or self.c0 + self.c1 + self.c2 <= 0.0:
            raise ValueError("road-load coefficients must be nonnegative and not all zero")
        if self.desired_speed <= 0.0:
            raise ValueError("desired speed must be positive")


@dataclass(frozen=True)
class VehicleSpec:
    """One scheduled vehicle: where/when it enters and what it is."""

    vid: int
    lane: geometry.Lane
    spawn_time: float
    spawn_s: float
    speed0: float
    params: VehicleParams


@dataclass(frozen=True)
class FaultSpec:
    """Power-loss trigger: position threshold and/or absolute time."""

    victim_id: int
    trigger_s: float | None = None
    trigger_time: float | None = None

    def __post_init__(self):
        if self.trigger_s is None and self.trigger_time is None:
            raise ValueError("fault needs a position or time trigger")


@dataclass(frozen=True)
class Scenario:
    net: geometry.RoadNetwork
    ts: float
    vehicles: tuple[VehicleSpec, ...]
    fault: FaultSpec | None = None
    injection_beta: float = 0.1
    label: str = ""

    def params_by_id(self) -> dict[int, VehicleParams]:
        return {v.vid: v.params for v in self.vehicles}

    def desired_speed_by_id(self) -> dict[int, float]:
        return {v.vid: v.params.desired_speed for v in self.vehicles}

    def digest(self) -> str:
        """Content hash used to assert cross-controller run pairing."""
        parts = [f"{self.net.merge_angle_rad!r}|{self.net.cz_upstream_m!r}|{self.net.cz_downstream_m!r}|{self.ts!r}"]
        for v in self.vehicles:
            p = v.params
            parts.append(
                f"{v.vid}|{int(v.lane)}|{v.spawn_time!r}|{v.spawn_s!r}|{v.speed0!r}|"
                f"{p.mass!r}|{p.radius!r}|{p.c0!r}|{p.c1!r}|{p.c2!r}|{p.desired_speed!r}"
            )
        if self.fault is not None:
            parts.append(f"F{self.fault.victim_id}|{self.fault.trigger_s!r}|{self.fault.trigger_time!r}")
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()


@dataclass
class VehicleState:
    vid: int
    lane: geometry.Lane
    s: float
    speed: float
    accel: float = 0.0
    u_cmd: float = 0.0
    faulted: bool = False
    cz_entry_time: float = 0.0


def _integrate(state: VehicleState, a: float, ts: float) -> VehicleState:
    v_new = max(0.0, state.speed + a * ts)
    a_eff = (v_new - state.speed) / ts
    s_new = state.s + state.speed * ts + 0.5 * a_eff * ts * ts
    lane = geometry.Lane.HIGHWAY if s_new >= 0.0 else state.lane
    return replace(state, lane=lane, s=s_new, speed=v_new, accel=a_eff)


def plant_step(
    state: VehicleState,
    u: float,
    ts: float,
    tau_f: float,
    a_min: float = -6.0,
    a_max: float = 5.0,
) -> VehicleState:
    """Advance one vehicle under a velocity command through the filter."""
    a = min(max((-state.speed + u) / tau_f, a_min), a_max)
    out = _integrate(state, a, ts)
    out.u_cmd = u
    return out


def accel_step(
    state: VehicleState,
    a_cmd: float,
    ts: float,
    a_min: float = -6.0,
    a_max: float = 5.0,
) -> VehicleState:
    """Advance one vehicle under a direct acceleration command."""
    a = min(max(a_cmd, a_min), a_max)
    out = _integrate(state, a, ts)
    out.u_cmd = state.speed + a * ts
    return out


def road_load_decel(speed: float, params: VehicleParams) -> float:
    if speed <= 0.0:
        return 0.0
    force = params.c0 + params.c1 * speed + params.c2 * speed * speed
    return -force / params.mass


def faulted_step(state: VehicleState, params: VehicleParams, ts: float) -> VehicleState:
    """Coast-down step for a powerless vehicle; any command is ignored."""
    if not state.faulted:
        raise ValueError("faulted_step on a healthy vehicle")
    a = road_load_decel(state.speed, params)
    out = _integrate(state, a, ts)
    out.u_cmd = state.speed  # the broadcast-equivalent of "no actuation"
    return out


@dataclass
class StepLog:
    """Flat per-(step, vehicle) record of one run plus per-step safety audit."""

    ts: float
    times: np.ndarray
    vids: np.ndarray
    lane: np.ndarray
    s: np.ndarray
    speed: np.ndarray
    u_cmd: np.ndarray
    accel: np.ndarray
    faulted: np.ndarray
    step_index: np.ndarray
    step_times: np.ndarray
    step_min_h0: np.ndarray
    merge_cross_time: dict[int, float]
    collision_pairs: set[tuple[int, int]]
    collision_events: list[tuple[float, int, int, float]]
    infeasible_events: list[tuple[float, int]]
    gridlock: bool = False

    CSV_HEADER = ("time_s", "id", "lane", "s_m", "speed_mps", "u_mps",
                  "accel_mps2", "faulted", "min_h0_m2")

    def vehicle_rows(self, vid: int) -> np.ndarray:
        return np.flatnonzero(self.vids == vid)

    def vehicle_ids(self) -> np.ndarray:
        return np.unique(self.vids)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.CSV_HEADER)
            for i in range(self.times.shape[0]):
                lane_name = "merge" if self.lane[i] == geometry.Lane.MERGE else "highway"
                w.writerow([
                    f"{self.times[i]:.6f}", int(self.vids[i]), lane_name,
                    f"{self.s[i]:.6f}", f"{self.speed[i]:.6f}", f"{self.u_cmd[i]:.6f}",
                    f"{self.accel[i]:.6f}", int(self.faulted[i]),
                    f"{self.step_min_h0[self.step_index[i]]:.6f}",
                ])


class _LogBuilder:
    def __init__(self, ts: float):
        self.ts = ts
        self.cols: list[list] = [[] for _ in range(8)]
        self.step_of_row: list[int] = []
        self.step_times: list[float] = []
        self.step_min_h0: list[float] = []
        self.merge_cross: dict[int, float] = {}
        self.collision_pairs: set[tuple[int, int]] = set()
        self.collision_events: list[tuple[float, int, int, float]] = []
        self.infeasible: list[tuple[float, int]] = []
        self.gridlock = False

    def finish(self) -> StepLog:
        t, vid, lane, s, v, u, a, f = self.cols
        return StepLog(
            ts=self.ts,
            times=np.asarray(t), vids=np.asarray(vid, dtype=np.int64),
            lane=np.asarray(lane, dtype=np.int8), s=np.asarray(s),
            speed=np.asarray(v), u_cmd=np.asarray(u), accel=np.asarray(a),
            faulted=np.asarray(f, dtype=bool),
            step_index=np.asarray(self.step_of_row, dtype=np.int64),
            step_times=np.asarray(self.step_times),
            step_min_h0=np.asarray(self.step_min_h0),
            merge_cross_time=self.merge_cross,
            collision_pairs=self.collision_pairs,
            collision_events=self.collision_events,
            infeasible_events=self.infeasible,
            gridlock=self.gridlock,
        )


def _pairwise_h0(states: list[VehicleState], params: dict, net: geometry.RoadNetwork):
    """Margin-free barrier values over all pairs; returns (minated value, violating pairs)."""
    n = len(states)
    if n < 2:
        return math.inf, []
    lane = np.array([int(v.lane) for v in states], dtype=np.int8)
    s = np.array([v.s for v in states])
    speed = np.array([v.speed for v in states])
    pos, _, _ = geometry.planar_states(lane, s, speed, net)
    iu, ju = np.triu_indices(n, 1)
    xi = pos[iu] - pos[ju]
    radius = np.array([params[v.vid].radius for v in states])
    rsum = radius[iu] + radius[ju]
    h0 = np.einsum("ij,ij->i", xi, xi) - rsum * rsum
    worst = float(np.min(h0))
    bad = [
        (states[int(iu[k])].vid, states[int(ju[k])].vid, float(h0[k]))
        for k in np.flatnonzero(h0 < 0.0)
    ]
    return worst, bad


def run_scenario(scenario: Scenario, controller, t_max: float = 600.0) -> StepLog:
    """Advance the world until every scheduled vehicle has crossed the exit.

    Per step: snapshot the control zone, evaluate the controller on it,
    advance all plants (faulted ones coast), log, then inject due vehicles
    (held at the entrance while their barrier against the nearest same-lane
    vehicle is violated) and evict anything past the downstream boundary.
    Collisions are logged, never fatal. Exceeding t_max sets the gridlock
    flag and aborts.
    """
    net = scenario.net
    ts = scenario.ts
    params = scenario.params_by_id()
    pending = sorted(scenario.vehicles, key=lambda v: (v.spawn_time, v.vid))
    world: list[VehicleState] = []
    log = _LogBuilder(ts)
    fault = scenario.fault

    t = 0.0
    step = 0
    while True:
        # inject due vehicles, gated on the nearest same-lane occupant
        still_pending = []
        for spec in pending:
            if spec.spawn_time > t + 1e-12:
                still_pending.append(spec)
                continue
            blocked = False
            same = [v for v in world if v.lane == spec.lane]
            if same:
                nearest = min(same, key=lambda v: v.s)
                xi, _ = geometry.pair_separation(
                    geometry.LanePosition(spec.lane, spec.spawn_s),
                    geometry.LanePosition(nearest.lane, nearest.s),
                    spec.speed0, nearest.speed, net)
                d = (1.0 + scenario.injection_beta) * (spec.params.radius + params[nearest.vid].radius)
                blocked = float(xi @ xi) <= d * d
            if blocked:
                still_pending.append(spec)
            else:
                world.append(VehicleState(
                    vid=spec.vid, lane=spec.lane, s=spec.spawn_s,
                    speed=spec.speed0, u_cmd=spec.speed0, cz_entry_time=t))
        pending = still_pending

        if not world and not pending:
            break
        if t > t_max:
            log.gridlock = True
            break

        if world:
            # trigger the power-loss fault
            if fault is not None:
                for v in world:
                    if v.vid == fault.victim_id and not v.faulted:
                        hit_s = fault.trigger_s is not None and v.s >= fault.trigger_s
                        hit_t = fault.trigger_time is not None and t >= fault.trigger_time - 1e-12
                        if hit_s or hit_t:
                            v.faulted = True

            snap = Snapshot(
                ids=np.array([v.vid for v in world], dtype=np.int64),
                lane=np.array([int(v.lane) for v in world], dtype=np.int8),
                s=np.array([v.s for v in world]),
                speed=np.array([v.speed for v in world]),
                accel=np.array([v.accel for v in world]),
                radius=np.array([params[v.vid].radius for v in world]),
                mass=np.array([params[v.vid].mass for v in world]),
                entry_time=np.array([v.cz_entry_time for v in world]),
                faulted=np.array([v.faulted for v in world], dtype=bool),
            )
            cmds = controller.step(t, snap)
            for vid in cmds.infeasible_ids:
                log.infeasible.append((t, vid))

            worst_h0, bad_pairs = _pairwise_h0(world, params, net)
            for vid_i, vid_j, value in bad_pairs:
                key = (min(vid_i, vid_j), max(vid_i, vid_j))
                if key not in log.collision_pairs:
                    log.collision_pairs.add(key)
                log.collision_events.append((t, key[0], key[1], value))

            new_world = []
            for i, v in enumerate(world):
                if v.faulted:
                    nxt = faulted_step(v, params[v.vid], ts)
                elif cmds.kind == "velocity":
                    nxt = plant_step(v, float(cmds.values[i]), ts,
                                     controller.gains.barrier.tau_f,
                                     controller.gains.a_min, controller.gains.a_max)
                else:
                    nxt = accel_step(v, float(cmds.values[i]), ts,
                                     controller.gains.a_min, controller.gains.a_max)
                if v.s < 0.0 <= nxt.s:
                    frac = -v.s / max(nxt.s - v.s, 1e-12)
                    log.merge_cross[v.vid] = t + frac * ts
                new_world.append(nxt)

            log.step_times.append(t)
            log.step_min_h0.append(worst_h0)
            for i, v in enumerate(world):
                log.cols[0].append(t)
                log.cols[1].append(v.vid)
                log.cols[2].append(int(v.lane))
                log.cols[3].append(v.s)
                log.cols[4].append(v.speed)
                log.cols[5].append(new_world[i].u_cmd)
                log.cols[6].append(new_world[i].accel)
                log.cols[7].append(v.faulted)
                log.step_of_row.append(step)
            step += 1

            world = [v for v in new_world if v.s <= net.cz_downstream_m]

        t += ts

    return log.finish()
