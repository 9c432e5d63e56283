"""Planar embedding of the two-lane merge network.

The merge point is the origin of the plane. The highway runs along +x with
travel in the +x direction; the merge lane approaches the origin in a straight
line at angle ``gamma`` from below (y < 0 upstream). Arc positions ``s`` are
signed distances to the merge point: negative upstream, positive downstream.
Downstream of the merge point (s >= 0) every vehicle travels on the highway
line, so a merge-lane vehicle's heading jumps to the highway heading exactly
at s = 0 (the 1-DoF model has no lateral transition dynamics).

Control-zone (CZ) membership is s in [-cz_upstream_m, +cz_downstream_m];
constraints are only generated among CZ members.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Lane(enum.IntEnum):
    HIGHWAY = 0
    MERGE = 1


class OutOfZoneError(ValueError):
    """Raised when a position outside the control zone is mapped to the plane."""


@dataclass(frozen=True)
class RoadNetwork:
    """Two-lane merge geometry: merge angle and control-zone extents."""

    merge_angle_rad: float
    cz_upstream_m: float
    cz_downstream_m: float

    def __post_init__(self):
        if not 0.0 < self.merge_angle_rad < math.pi / 2:
            raise ValueError(f"merge angle must be in (0, pi/2), got {self.merge_angle_rad}")
        if self.cz_upstream_m <= 0.0 or self.cz_downstream_m <= 0.0:
            raise ValueError("control-zone extents must be positive")

    def contains(self, s: float) -> bool:
        return -self.cz_upstream_m <= s <= self.cz_downstream_m


@dataclass(frozen=True)
class LanePosition:
    """Arc position on the network: lane tag plus signed distance to the merge point."""

    lane: Lane
    s: float

    def __post_init__(self):
        if self.lane == Lane.MERGE and self.s > 0.0:
            raise ValueError("merge-lane positions exist only upstream (s <= 0)")


def heading(lane: Lane, s: float, net: RoadNetwork) -> np.ndarray:
    """Unit travel direction at (lane, s); well defined even at zero speed."""
    if lane == Lane.MERGE and s < 0.0:
        g = net.merge_angle_rad
        return np.array([math.cos(g), math.sin(g)])
    return np.array([1.0, 0.0])


def to_plane(p: LanePosition, speed: float, net: RoadNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Map an arc position and scalar speed to planar position and velocity.

    Upstream merge-lane points sit on the ray through the origin at angle
    -gamma (y < 0); everything else sits on the x-axis. The returned velocity
    is speed times the local heading, so its norm equals ``speed`` exactly.

    Raises OutOfZoneError outside the control zone: the caller is expected to
    have evicted the vehicle.
    """
    if not net.contains(p.s):
        raise OutOfZoneError(f"s={p.s} outside control zone "
                             f"[-{net.cz_upstream_m}, {net.cz_downstream_m}]")
    e = heading(p.lane, p.s, net)
    if p.lane == Lane.MERGE and p.s < 0.0:
        pos = p.s * e
    else:
        pos = np.array([p.s, 0.0])
    return pos, speed * e


def pair_separation(
    pi: LanePosition,
    pj: LanePosition,
    vi: float,
    vj: float,
    net: RoadNetwork,
) -> tuple[np.ndarray, np.ndarray]:
    """Center-to-center separation xi = pos_i - pos_j and relative velocity."""
    pos_i, vel_i = to_plane(pi, vi, net)
    pos_j, vel_j = to_plane(pj, vj, net)
    return pos_i - pos_j, vel_i - vel_j


def planar_states(
    lane: np.ndarray,
    s: np.ndarray,
    speed: np.ndarray,
    net: RoadNetwork,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized to_plane over vehicle arrays.

    Returns (pos, vel, head) with shape (n, 2). Equivalent to calling
    `to_plane`/`heading` per vehicle; used on the simulation hot path.
    """
    n = s.shape[0]
    g = net.merge_angle_rad
    head = np.empty((n, 2))
    head[:, 0] = 1.0
    head[:, 1] = 0.0
    on_ramp = (lane == Lane.MERGE) & (s < 0.0)
    head[on_ramp, 0] = math.cos(g)
    head[on_ramp, 1] = math.sin(g)

    pos = np.empty((n, 2))
    pos[:, 0] = s
    pos[:, 1] = 0.0
    pos[on_ramp] = s[on_ramp, None] * head[on_ramp]
    vel = speed[:, None] * head
    return pos, vel, head
