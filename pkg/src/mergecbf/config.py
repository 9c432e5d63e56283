"""Scenario configuration, flat-file (de)serialization, and stochastic sampling.

Config files are INI-style flat key-value sections, all values SI, so runs
are bit-reproducible and diffs are readable. Sampling uses a counter-based
generator (Philox) keyed on (seed, run_index): every run has its own
substream, so batches are reproducible regardless of execution order or
worker count.

Per lane and run the sampler draws, in order: injection rate, first arrival,
headways (uniform jitter around the rate's mean headway), speeds, masses.
Radii scale linearly with mass between the configured bounds; road-load
coefficients interpolate in mass from the coast-down table. The optional
power-loss victim is drawn last, from the middle third of its lane's
injection order.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constraints import BarrierGains
from .controllers import DEFAULT_ALPHA, LBS_TO_KG, M_BASE_KG, ControllerGains
from .geometry import Lane, RoadNetwork
from .metrics import CoastDownTable, load_coast_down_table
from .simulation import FaultSpec, Scenario, VehicleParams, VehicleSpec

DEMO_MASS_KG = 4500.0 * LBS_TO_KG
DEMO4_NAMES = {0: "M1", 1: "H1", 2: "H2", 3: "M2"}


def _default_network() -> RoadNetwork:
    return RoadNetwork(merge_angle_rad=math.radians(30.0), cz_upstream_m=200.0,
                       cz_downstream_m=350.0)


def _default_dpc() -> ControllerGains:
    return ControllerGains(barrier=BarrierGains(0.6, 2.0, 0.1, 0.4), tau_w=0.4,
                           alpha=DEFAULT_ALPHA)


def _default_ccbf() -> ControllerGains:
    return ControllerGains(barrier=BarrierGains(0.6, 2.0, 0.1, 0.4), tau_w=0.4,
                           alpha=DEFAULT_ALPHA)


def _default_fifo() -> ControllerGains:
    return ControllerGains(barrier=BarrierGains(0.3, 2.0, 0.1, 0.4), tau_w=0.4,
                           alpha=0.0, slack_weight=1.0e4, speed_gain=0.5)


@dataclass
class ScenarioConfig:
    network: RoadNetwork = field(default_factory=_default_network)
    vehicles_per_lane: int = 10
    speed_lo_mps: float = 20.0
    speed_hi_mps: float = 25.0
    rate_lo_vph: float = 1100.0
    rate_hi_vph: float = 1200.0
    mass_lo_kg: float = M_BASE_KG
    mass_hi_kg: float = 4.0 * M_BASE_KG
    radius_lo_m: float = 2.0
    radius_hi_m: float = 4.0
    headway_jitter: float = 0.3
    injection_beta: float = 0.1
    ts_s: float = 0.1
    seed: int = 1
    runs: int = 500
    fault_trigger_s_m: float = -150.0
    dpc: ControllerGains = field(default_factory=_default_dpc)
    ccbf: ControllerGains = field(default_factory=_default_ccbf)
    fifo: ControllerGains = field(default_factory=_default_fifo)

    def __post_init__(self):
        for lo, hi, what in (
            (self.speed_lo_mps, self.speed_hi_mps, "speed"),
            (self.rate_lo_vph, self.rate_hi_vph, "rate"),
            (self.mass_lo_kg, self.mass_hi_kg, "mass"),
            (self.radius_lo_m, self.radius_hi_m, "radius"),
        ):
            if lo > hi:
                raise ValueError(f"{what} bounds out of order: {lo} > {hi}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 0.0 <= self.headway_jitter < 1.0:
            raise ValueError("headway_jitter must be in [0, 1)")

    def gains_for(self, controller: str) -> ControllerGains:
        gains = {"dpc": self.dpc, "ccbf": self.ccbf, "fifo": self.fifo}[controller]
        if gains.ts != self.ts_s:
            gains = replace(gains, ts=self.ts_s)
        return gains

    def radius_for_mass(self, mass: float) -> float:
        span = self.mass_hi_kg - self.mass_lo_kg
        frac = 0.0 if span <= 0.0 else (mass - self.mass_lo_kg) / span
        return self.radius_lo_m + (self.radius_hi_m - self.radius_lo_m) * frac


def default_config() -> ScenarioConfig:
    return ScenarioConfig()


# ---------------------------------------------------------------- file format

def _gains_to_section(g: ControllerGains) -> dict[str, str]:
    return {
        "lambda1": repr(g.barrier.lambda1),
        "lambda2": repr(g.barrier.lambda2),
        "beta": repr(g.barrier.beta),
        "tau_f_s": repr(g.barrier.tau_f),
        "tau_w_s": repr(g.tau_w),
        "alpha_per_kg": repr(g.alpha),
        "slack_weight": "none" if g.slack_weight is None else repr(g.slack_weight),
        "a_min_mps2": repr(g.a_min),
        "a_max_mps2": repr(g.a_max),
        "disturbance_mode": g.disturbance_mode,
        "speed_gain": repr(g.speed_gain),
    }


def _gains_from_section(sec, ts: float) -> ControllerGains:
    slack = sec.get("slack_weight", "none")
    return ControllerGains(
        barrier=BarrierGains(
            float(sec["lambda1"]), float(sec["lambda2"]),
            float(sec["beta"]), float(sec["tau_f_s"]),
        ),
        tau_w=float(sec["tau_w_s"]),
        alpha=float(sec["alpha_per_kg"]),
        slack_weight=None if slack.lower() == "none" else float(slack),
        ts=ts,
        a_min=float(sec["a_min_mps2"]),
        a_max=float(sec["a_max_mps2"]),
        disturbance_mode=sec.get("disturbance_mode", "euler"),
        speed_gain=float(sec.get("speed_gain", "0.5")),
    )


def to_ini(cfg: ScenarioConfig) -> str:
    cp = configparser.ConfigParser()
    cp["network"] = {
        "merge_angle_rad": repr(cfg.network.merge_angle_rad),
        "cz_upstream_m": repr(cfg.network.cz_upstream_m),
        "cz_downstream_m": repr(cfg.network.cz_downstream_m),
    }
    cp["traffic"] = {
        "vehicles_per_lane": str(cfg.vehicles_per_lane),
        "speed_lo_mps": repr(cfg.speed_lo_mps),
        "speed_hi_mps": repr(cfg.speed_hi_mps),
        "rate_lo_vph": repr(cfg.rate_lo_vph),
        "rate_hi_vph": repr(cfg.rate_hi_vph),
        "mass_lo_kg": repr(cfg.mass_lo_kg),
        "mass_hi_kg": repr(cfg.mass_hi_kg),
        "radius_lo_m": repr(cfg.radius_lo_m),
        "radius_hi_m": repr(cfg.radius_hi_m),
        "headway_jitter": repr(cfg.headway_jitter),
        "injection_beta": repr(cfg.injection_beta),
    }
    cp["run"] = {
        "ts_s": repr(cfg.ts_s),
        "seed": str(cfg.seed),
        "runs": str(cfg.runs),
    }
    cp["fault"] = {"trigger_s_m": repr(cfg.fault_trigger_s_m)}
    cp["dpc"] = _gains_to_section(cfg.dpc)
    cp["ccbf"] = _gains_to_section(cfg.ccbf)
    cp["fifo"] = _gains_to_section(cfg.fifo)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def from_ini(text: str) -> ScenarioConfig:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    ts = float(cp["run"]["ts_s"])
    return ScenarioConfig(
        network=RoadNetwork(
            merge_angle_rad=float(cp["network"]["merge_angle_rad"]),
            cz_upstream_m=float(cp["network"]["cz_upstream_m"]),
            cz_downstream_m=float(cp["network"]["cz_downstream_m"]),
        ),
        vehicles_per_lane=int(cp["traffic"]["vehicles_per_lane"]),
        speed_lo_mps=float(cp["traffic"]["speed_lo_mps"]),
        speed_hi_mps=float(cp["traffic"]["speed_hi_mps"]),
        rate_lo_vph=float(cp["traffic"]["rate_lo_vph"]),
        rate_hi_vph=float(cp["traffic"]["rate_hi_vph"]),
        mass_lo_kg=float(cp["traffic"]["mass_lo_kg"]),
        mass_hi_kg=float(cp["traffic"]["mass_hi_kg"]),
        radius_lo_m=float(cp["traffic"]["radius_lo_m"]),
        radius_hi_m=float(cp["traffic"]["radius_hi_m"]),
        headway_jitter=float(cp["traffic"]["headway_jitter"]),
        injection_beta=float(cp["traffic"]["injection_beta"]),
        ts_s=ts,
        seed=int(cp["run"]["seed"]),
        runs=int(cp["run"]["runs"]),
        fault_trigger_s_m=float(cp["fault"]["trigger_s_m"]),
        dpc=_gains_from_section(cp["dpc"], ts),
        ccbf=_gains_from_section(cp["ccbf"], ts),
        fifo=_gains_from_section(cp["fifo"], ts),
    )


def save_config(cfg: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_ini(cfg))


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return from_ini(fh.read())


# ------------------------------------------------------------------- sampling

def run_rng(seed: int, run_index: int) -> np.random.Generator:
    """Philox substream for one run; independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, run_index))))


def sample_scenario(
    cfg: ScenarioConfig,
    run_index: int,
    fault_lane: Lane | None = None,
    coast: CoastDownTable | None = None,
) -> Scenario:
    """Concrete per-run draw: arrivals, speeds, masses, radii, optional victim."""
    rng = run_rng(cfg.seed, run_index)
    coast = coast if coast is not None else load_coast_down_table()
    n = cfg.vehicles_per_lane
    specs: list[VehicleSpec] = []
    arrivals_by_lane: dict[Lane, list[int]] = {}
    vid = 0
    for lane in (Lane.HIGHWAY, Lane.MERGE):
        rate = rng.uniform(cfg.rate_lo_vph, cfg.rate_hi_vph)
        mean_headway = 3600.0 / rate
        first = rng.uniform(0.0, mean_headway)
        jit = cfg.headway_jitter
        headways = rng.uniform((1.0 - jit) * mean_headway, (1.0 + jit) * mean_headway,
                               size=max(n - 1, 0))
        arrivals = first + np.concatenate([[0.0], np.cumsum(headways)]) if n else np.empty(0)
        speeds = rng.uniform(cfg.speed_lo_mps, cfg.speed_hi_mps, size=n)
        masses = rng.uniform(cfg.mass_lo_kg, cfg.mass_hi_kg, size=n)
        lane_ids = []
        for k in range(n):
            mass = float(masses[k])
            c0, c1, c2 = coast.coefficients(mass)
            specs.append(VehicleSpec(
                vid=vid, lane=lane, spawn_time=float(arrivals[k]),
                spawn_s=-cfg.network.cz_upstream_m, speed0=float(speeds[k]),
                params=VehicleParams(mass=mass, radius=cfg.radius_for_mass(mass),
                                     c0=c0, c1=c1, c2=c2,
                                     desired_speed=float(speeds[k])),
            ))
            lane_ids.append(vid)
            vid += 1
        arrivals_by_lane[lane] = lane_ids

    fault = None
    label = f"run{run_index}"
    if fault_lane is not None:
        lane_ids = arrivals_by_lane[fault_lane]
        lo = len(lane_ids) // 3
        hi = len(lane_ids) - lo
        victim = lane_ids[int(rng.integers(lo, max(hi, lo + 1)))]
        fault = FaultSpec(victim_id=victim, trigger_s=cfg.fault_trigger_s_m)
        label = f"fault{run_index}"

    return Scenario(net=cfg.network, ts=cfg.ts_s, vehicles=tuple(specs), fault=fault,
                    injection_beta=cfg.injection_beta, label=label)


def demo_four_vehicle(cfg: ScenarioConfig | None = None,
                      coast: CoastDownTable | None = None) -> Scenario:
    """The nearly-symmetric four-vehicle scenario: two per lane at 20 m/s.

    Highway pair 2 s apart; the first merge vehicle leads the first highway
    vehicle by 0.1 m of distance-to-merge, the second trails the second
    highway vehicle by 0.1 m. Ids are ordered M1, H1, H2, M2 so entry-order
    priority (ties by id) matches the pre-placed geometry.
    """
    cfg = cfg if cfg is not None else default_config()
    coast = coast if coast is not None else load_coast_down_table()
    speed = 20.0
    c0, c1, c2 = coast.coefficients(DEMO_MASS_KG)
    params = VehicleParams(mass=DEMO_MASS_KG, radius=cfg.radius_for_mass(DEMO_MASS_KG),
                           c0=c0, c1=c1, c2=c2, desired_speed=speed)
    gap = 2.0 * speed
    s_h1 = -120.0
    placed = [
        (0, Lane.MERGE, s_h1 + 0.1),      # M1
        (1, Lane.HIGHWAY, s_h1),          # H1
        (2, Lane.HIGHWAY, s_h1 - gap),    # H2
        (3, Lane.MERGE, s_h1 - gap - 0.1),  # M2
    ]
    specs = tuple(
        VehicleSpec(vid=vid, lane=lane, spawn_time=0.0, spawn_s=s0, speed0=speed,
                    params=params)
        for vid, lane, s0 in placed
    )
    return Scenario(net=cfg.network, ts=cfg.ts_s, vehicles=specs,
                    injection_beta=cfg.injection_beta, label="demo4")
