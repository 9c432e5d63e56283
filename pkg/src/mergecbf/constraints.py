"""Barrier function and second-order constraint rows for merging control.

The pairwise barrier is h = xi'xi - ((1+beta)(r_i + r_j))^2 on the planar
separation xi. Enforcing hdd + l1*hd + l0*h >= 0 along the filtered-velocity
agent model v' = (-v + u)/tau_f yields one linear row per unordered pair,

    A + B (u_i^planar - u_j^planar) >= 0,
    A = 2 v'v + 2 xi'v (l1 - 1/tau_f) + l0 h,   B = (2/tau_f) xi',

with l0 = lambda1*lambda2 and l1 = lambda1 + lambda2. Scalar controls act
along each vehicle's current heading, so the row coefficient on u_i is
B . e_i and on u_j is -(B . e_j).

For the double-integrator (acceleration-controlled) model the same chain
gives A = 2 v'v + 2 l1 xi'v + l0 h and B = 2 xi' acting on the acceleration
difference; used by the priority-ordered benchmark controller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BarrierGains:
    """Second-order barrier tuning: pole pair, safety margin, command filter."""

    lambda1: float
    lambda2: float
    beta: float
    tau_f: float

    def __post_init__(self):
        if self.lambda1 <= 0.0 or self.lambda2 <= 0.0:
            raise ValueError("lambda1 and lambda2 must be positive real")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")
        if self.tau_f <= 0.0:
            raise ValueError("tau_f must be positive")

    @property
    def l0(self) -> float:
        return self.lambda1 * self.lambda2

    @property
    def l1(self) -> float:
        return self.lambda1 + self.lambda2


def barrier_value(xi: np.ndarray, r_i: float, r_j: float, beta: float) -> float:
    """h = ||xi||^2 - ((1+beta)(r_i+r_j))^2; nonnegative means separated."""
    if r_i <= 0.0 or r_j <= 0.0:
        raise ValueError("barrier radii must be positive")
    xi = np.asarray(xi, dtype=float)
    d = (1.0 + beta) * (r_i + r_j)
    return float(xi @ xi - d * d)


def constraint_row(
    xi: np.ndarray, v_rel: np.ndarray, h: float, gains: BarrierGains
) -> tuple[float, np.ndarray]:
    """Constant term A and planar coefficient B of one filtered-velocity row."""
    xi = np.asarray(xi, dtype=float)
    v_rel = np.asarray(v_rel, dtype=float)
    a = float(
        2.0 * (v_rel @ v_rel)
        + 2.0 * (xi @ v_rel) * (gains.l1 - 1.0 / gains.tau_f)
        + gains.l0 * h
    )
    b = (2.0 / gains.tau_f) * xi
    return a, b


def integrator_row(
    xi: np.ndarray, v_rel: np.ndarray, h: float, l0: float, l1: float
) -> tuple[float, np.ndarray]:
    """A and B for the acceleration-controlled (double integrator) model."""
    xi = np.asarray(xi, dtype=float)
    v_rel = np.asarray(v_rel, dtype=float)
    a = float(2.0 * (v_rel @ v_rel) + 2.0 * l1 * (xi @ v_rel) + l0 * h)
    return a, 2.0 * xi


def box_rows(
    v: float, tau_f: float, a_min: float = -6.0, a_max: float = 5.0
) -> tuple[float, float]:
    """Velocity-command bounds implied by acceleration limits through the filter."""
    if a_min >= a_max:
        raise ValueError("a_min must be below a_max")
    return v + tau_f * a_min, v + tau_f * a_max


@dataclass
class PairTable:
    """All unordered-pair constraint data for one control-zone snapshot.

    Row r couples vehicles iu[r] (coefficient +b_first[r]) and ju[r]
    (coefficient -b_second[r]). h0 is the margin-free barrier value used for
    collision auditing.
    """

    iu: np.ndarray
    ju: np.ndarray
    a_term: np.ndarray
    b_first: np.ndarray
    b_second: np.ndarray
    h: np.ndarray
    h0: np.ndarray

    @property
    def count(self) -> int:
        return self.a_term.shape[0]


def build_pair_table(
    pos: np.ndarray,
    vel: np.ndarray,
    head: np.ndarray,
    radius: np.ndarray,
    gains: BarrierGains,
) -> PairTable:
    """Vectorized `constraint_row` over all n(n-1)/2 pairs of a snapshot."""
    n = pos.shape[0]
    iu, ju = np.triu_indices(n, 1)
    xi = pos[iu] - pos[ju]
    dv = vel[iu] - vel[ju]
    rsum = radius[iu] + radius[ju]
    norm2 = np.einsum("ij,ij->i", xi, xi)
    h0 = norm2 - rsum * rsum
    d = (1.0 + gains.beta) * rsum
    h = norm2 - d * d
    xv = np.einsum("ij,ij->i", xi, dv)
    a = (
        2.0 * np.einsum("ij,ij->i", dv, dv)
        + 2.0 * xv * (gains.l1 - 1.0 / gains.tau_f)
        + gains.l0 * h
    )
    scale = 2.0 / gains.tau_f
    b_first = scale * np.einsum("ij,ij->i", xi, head[iu])
    b_second = scale * np.einsum("ij,ij->i", xi, head[ju])
    return PairTable(iu, ju, a, b_first, b_second, h, h0)
