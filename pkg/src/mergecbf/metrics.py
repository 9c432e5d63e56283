"""Safety, flow, and powertrain-agnostic energy metrics over run logs.

Energy bookkeeping per vehicle and step (window: control-zone residence):

- positive-acceleration kinetic energy: 0.5 m (v_{k+1}^2 - v_k^2), summed
  over steps with positive acceleration;
- braking energy: tractive force F = m a + roadload(v); the negative part
  beyond coasting, max(0, -F) v Ts, is friction-brake dissipation;
- total energy loss: per-step max of braking loss and road-load loss
  roadload(v) v Ts, accumulated.

Each total is normalized by the distance traveled inside the zone and
reported in Wh/km; system level is the arithmetic mean over vehicles.

Road-load coefficients come from a coast-down table (CSV columns
mass_kg,c0_n,c1_nspm,c2_ns2pm2) spanning a subcompact to a full-size electric
truck; per-vehicle coefficients are interpolated linearly in mass.
"""

from __future__ import annotations

import importlib.resources
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .simulation import StepLog, VehicleParams

J_PER_M_TO_WH_PER_KM = 1000.0 / 3600.0


def road_load_force(v: float, coast_down: tuple[float, float, float]) -> float:
    """Resistive force C0 + C1 v + C2 v^2 at speed v >= 0."""
    if v < 0.0:
        raise ValueError("road load is defined for nonnegative speed")
    c0, c1, c2 = coast_down
    return c0 + c1 * v + c2 * v * v


@dataclass(frozen=True)
class CoastDownTable:
    mass_kg: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray

    def coefficients(self, mass: float) -> tuple[float, float, float]:
        """Linear interpolation in mass, clamped at the table ends."""
        return (
            float(np.interp(mass, self.mass_kg, self.c0)),
            float(np.interp(mass, self.mass_kg, self.c1)),
            float(np.interp(mass, self.mass_kg, self.c2)),
        )


def load_coast_down_table(path=None) -> CoastDownTable:
    if path is None:
        ref = importlib.resources.files("mergecbf.data").joinpath("coast_down.csv")
        text = ref.read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header != ["mass_kg", "c0_n", "c1_nspm", "c2_ns2pm2"]:
        raise ValueError(f"unexpected coast-down header {header}")
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    order = np.argsort(rows[:, 0])
    rows = rows[order]
    if np.any(rows[:, 1:] < 0.0):
        raise ValueError("coast-down coefficients must be nonnegative")
    return CoastDownTable(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3])


@dataclass
class VehicleEnergy:
    pake_whpkm: float
    be_whpkm: float
    tel_whpkm: float
    distance_m: float


@dataclass
class MetricsReport:
    pake_whpkm: float
    be_whpkm: float
    tel_whpkm: float
    travel_time_s: float
    avg_speed_mps: float
    h0_min_m2: float
    collisions: int
    gridlock: bool = False
    infeasible_count: int = 0
    per_vehicle: dict[int, VehicleEnergy] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "pake_whpkm": self.pake_whpkm,
            "be_whpkm": self.be_whpkm,
            "tel_whpkm": self.tel_whpkm,
            "travel_time_s": self.travel_time_s,
            "avg_speed_mps": self.avg_speed_mps,
            "h0_min_m2": self.h0_min_m2,
            "collisions": self.collisions,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")


def _vehicle_energy(v: np.ndarray, a: np.ndarray, s: np.ndarray,
                    params: VehicleParams, ts: float) -> VehicleEnergy:
    coast = (params.c0, params.c1, params.c2)
    distance = float(s[-1] - s[0])
    if v.shape[0] < 2 or distance <= 0.0:
        return VehicleEnergy(0.0, 0.0, 0.0, max(distance, 0.0))
    vk = v[:-1]
    ak = a[:-1]
    dke = 0.5 * params.mass * (v[1:] ** 2 - vk**2)
    pake_j = float(np.sum(np.where(ak > 0.0, np.maximum(dke, 0.0), 0.0)))
    f_rl = params.c0 + params.c1 * vk + params.c2 * vk**2
    f_trac = params.mass * ak + f_rl
    e_brake = np.maximum(0.0, -f_trac) * vk * ts
    e_rl = f_rl * vk * ts
    be_j = float(np.sum(e_brake))
    tel_j = float(np.sum(np.maximum(e_brake, e_rl)))
    to_whpkm = J_PER_M_TO_WH_PER_KM / distance
    return VehicleEnergy(pake_j * to_whpkm, be_j * to_whpkm, tel_j * to_whpkm, distance)


def energy_metrics(log: StepLog, params_by_id: dict[int, VehicleParams]) -> dict[int, VehicleEnergy]:
    """Per-vehicle normalized energy numbers over the logged zone residence."""
    out: dict[int, VehicleEnergy] = {}
    for vid in log.vehicle_ids():
        vid = int(vid)
        if vid not in params_by_id:
            raise KeyError(f"no parameters for logged vehicle {vid}")
        rows = log.vehicle_rows(vid)
        out[vid] = _vehicle_energy(
            log.speed[rows], log.accel[rows], log.s[rows], params_by_id[vid], log.ts
        )
    return out


def flow_metrics(log: StepLog) -> tuple[float, float, bool]:
    """(travel time to the last merge-point crossing, mean zone speed, gridlock)."""
    ids = log.vehicle_ids()
    crossed = [log.merge_cross_time.get(int(v)) for v in ids]
    gridlock = log.gridlock or any(c is None for c in crossed)
    travel_time = math.inf if gridlock else (max(crossed) if crossed else 0.0)
    avg_speed = float(np.mean(log.speed)) if log.speed.size else 0.0
    return travel_time, avg_speed, gridlock


def h0_min(log: StepLog, radii_by_id: dict[int, float], net: geometry.RoadNetwork) -> float:
    """Margin-free barrier minimum recomputed from logged states.

    Independent of the online per-step audit column; the two are compared in
    tests. Negative means two barrier disks overlapped at some step.
    """
    worst = math.inf
    for k in range(log.step_times.shape[0]):
        rows = np.flatnonzero(log.step_index == k)
        if rows.shape[0] < 2:
            continue
        pos, _, _ = geometry.planar_states(log.lane[rows], log.s[rows], log.speed[rows], net)
        iu, ju = np.triu_indices(rows.shape[0], 1)
        xi = pos[iu] - pos[ju]
        radius = np.array([radii_by_id[int(v)] for v in log.vids[rows]])
        rsum = radius[iu] + radius[ju]
        h0 = np.einsum("ij,ij->i", xi, xi) - rsum * rsum
        worst = min(worst, float(np.min(h0)))
    return worst


def compute_report(log: StepLog, params_by_id: dict[int, VehicleParams]) -> MetricsReport:
    """Full per-run report from a log (uses the online per-step h0 audit)."""
    per_vehicle = energy_metrics(log, params_by_id)
    travel_time, avg_speed, gridlock = flow_metrics(log)
    worst_h0 = float(np.min(log.step_min_h0)) if log.step_min_h0.size else math.inf
    vals = list(per_vehicle.values())
    mean = lambda xs: float(np.mean(xs)) if xs else 0.0
    return MetricsReport(
        pake_whpkm=mean([v.pake_whpkm for v in vals]),
        be_whpkm=mean([v.be_whpkm for v in vals]),
        tel_whpkm=mean([v.tel_whpkm for v in vals]),
        travel_time_s=travel_time,
        avg_speed_mps=avg_speed,
        h0_min_m2=worst_h0,
        collisions=len(log.collision_pairs),
        gridlock=gridlock,
        infeasible_count=len(log.infeasible_events),
        per_vehicle=per_vehicle,
    )
