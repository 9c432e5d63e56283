"""Two-vehicle contested-mode analysis: equilibrium, eigenvalues, tuning range.

With one vehicle per lane and the pair constraint active, the centralized
closed loop (exact desired speeds, no disturbance loops) is analytic: the
constrained optimum is the projection of the mass-blended speed targets onto
the constraint boundary. In coordinates z = T s with T = [[1, -cos g],[0,
sin g]] positions appear orthogonal, and the linearization at the stalled
contested equilibrium splits into a barrier-following block with eigenvalues
{-lambda1, -lambda2} and a tangential block

    A_mu = [[0, 1], [kappa |v0| / D, -kappa]],  kappa = 1/(tau_f (1 + alpha m)),

whose eigenvalues -kappa/2 +- sqrt(kappa^2/4 + kappa |v0| / D) contain exactly
one positive mode: the contested equilibrium repels, which is what rules out
gridlock. A root-locus argument on s -> (s - |v0|/D)/s^2 bounds the unstable
eigenvalue inside (0, |v0|/D) over all kappa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize


@dataclass(frozen=True)
class TwoVehicleTuning:
    """Reduced parameters of the contested two-vehicle mode."""

    gamma: float
    v0: tuple[float, float]
    big_d: float  # barrier diameter 2 (1+beta) r for same-size agents
    kappa: float  # velocity-loop bandwidth after mass scaling

    def __post_init__(self):
        if self.big_d <= 0.0 or self.kappa <= 0.0:
            raise ValueError("D and kappa must be positive")

    @property
    def v0_norm(self) -> float:
        return math.hypot(self.v0[0], self.v0[1])


def kappa_from_physical(tau_f: float, alpha_mass: float) -> float:
    """kappa = 1/(tau_f (1 + alpha*m)); alpha_mass is the dimensionless product."""
    return 1.0 / (tau_f * (1.0 + alpha_mass))


def transform(gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate change making the two lane positions orthogonal, and inverse."""
    if not 0.0 < gamma < math.pi:
        raise ValueError("transform is singular for gamma outside (0, pi)")
    t = np.array([[1.0, -math.cos(gamma)], [0.0, math.sin(gamma)]])
    return t, np.linalg.inv(t)


def mu_eigenvalues(tv: TwoVehicleTuning) -> tuple[float, float]:
    """(stable, unstable) eigenvalues of the tangential block; exactly one positive."""
    half = tv.kappa / 2.0
    disc = math.sqrt(half * half + tv.kappa * tv.v0_norm / tv.big_d)
    return -half - disc, -half + disc

def unstable_range(v0_norm: float, big_d: float) -> tuple[float, float]:
    """Open interval containing the unstable eigenvalue for every kappa > 0."""
    if v0_norm <= 0.0 or big_d <= 0.0:
        raise ValueError("inputs must be positive")
    return 0.0, v0_norm / big_d


@dataclass(frozen=True)
class ContestedPair:
    """Physical description of the always-active two-vehicle closed loop."""

    gamma: float
    v0: tuple[float, float]
    radius: float
    beta: float
    tau_f: float
    alpha_mass: float  # alpha * m (dimensionless)
    lambda1: float
    lambda2: float

    @property
    def big_d(self) -> float:
        return 2.0 * (1.0 + self.beta) * self.radius

    @property
    def kappa(self) -> float:
        return kappa_from_physical(self.tau_f, self.alpha_mass)

    def reduced(self) -> TwoVehicleTuning:
        return TwoVehicleTuning(self.gamma, self.v0, self.big_d, self.kappa)


def _pair_quantities(s: np.ndarray, v: np.ndarray, p: ContestedPair):
    e1 = np.array([1.0, 0.0])
    e2 = np.array([math.cos(p.gamma), math.sin(p.gamma)])
    xi = s[0] * e1 - s[1] * e2
    dv = v[0] * e1 - v[1] * e2
    return xi, dv, e1, e2


def constrained_control(s: np.ndarray, v: np.ndarray, p: ContestedPair) -> np.ndarray:
    """Analytic optimum with the pair row held at equality.

    u* = vbar - ((A + b . vbar)/(b . b)) b with vbar the mass-blended target
    (v0 + alpha m v)/(1 + alpha m) and b the row coefficients of the scalar
    controls after projecting onto the lane headings.
    """
    l0 = p.lambda1 * p.lambda2
    l1 = p.lambda1 + p.lambda2
    xi, dv, e1, e2 = _pair_quantities(s, v, p)
    h = float(xi @ xi) - p.big_d**2
    a = 2.0 * float(dv @ dv) + 2.0 * float(xi @ dv) * (l1 - 1.0 / p.tau_f) + l0 * h
    b = (2.0 / p.tau_f) * np.array([float(xi @ e1), -float(xi @ e2)])
    vbar = (np.asarray(p.v0) + p.alpha_mass * v) / (1.0 + p.alpha_mass)
    return vbar - ((a + float(b @ vbar)) / float(b @ b)) * b


def closed_loop_rhs(state: np.ndarray, p: ContestedPair) -> np.ndarray:
    """d/dt (s1, v1, s2, v2) under the always-active constrained control."""
    s = state[0::2]
    v = state[1::2]
    u = constrained_control(s, v, p)
    dv = (-v + u) / p.tau_f
    return np.array([v[0], dv[0], v[1], dv[1]])


def equilibrium_guess(p: ContestedPair) -> np.ndarray:
    """Closed-form stalled equilibrium for equal desired speeds (exact there)."""
    g = p.gamma
    s2 = -p.big_d * math.cos(g / 2.0) / math.sin(g)
    s1 = -p.big_d * math.sin(g / 2.0) + s2 * math.cos(g)
    return np.array([s1, s2])


def find_equilibrium(p: ContestedPair) -> np.ndarray:
    """Positions (s1, s2) where both stalled vehicles would hold zero command."""
    v0_zero = np.zeros(2)

    def residual(s):
        return constrained_control(np.asarray(s), v0_zero, p)

    sol = optimize.root(residual, equilibrium_guess(p), tol=1e-13)
    if not sol.success or float(np.max(np.abs(residual(sol.x)))) > 1e-9:
        raise RuntimeError(f"equilibrium search failed: {sol.message}")
    return np.asarray(sol.x)


def equilibrium_invariants(p: ContestedPair) -> tuple[float, float]:
    """(h_e, z1e*v0z2 - z2e*v0z1) at the equilibrium; both vanish there."""
    s_e = find_equilibrium(p)
    t, _ = transform(p.gamma)
    z = t @ s_e
    v0z = t @ np.asarray(p.v0)
    xi, _, _, _ = _pair_quantities(s_e, np.zeros(2), p)
    h_e = float(xi @ xi) - p.big_d**2
    return h_e, float(z[0] * v0z[1] - z[1] * v0z[0])


def linearized_spectrum(p: ContestedPair, fd_step: float = 1e-5) -> np.ndarray:
    """Eigenvalues of the central-difference Jacobian at the contested equilibrium."""
    s_e = find_equilibrium(p)
    x_e = np.array([s_e[0], 0.0, s_e[1], 0.0])
    jac = np.empty((4, 4))
    for k in range(4):
        dx = np.zeros(4)
        dx[k] = fd_step
        jac[:, k] = (closed_loop_rhs(x_e + dx, p) - closed_loop_rhs(x_e - dx, p)) / (2.0 * fd_step)
    eig = np.linalg.eigvals(jac)
    return np.sort_complex(eig)


def expected_spectrum(p: ContestedPair) -> np.ndarray:
    """Barrier poles plus the tangential pair predicted by the reduced model."""
    stable, unstable = mu_eigenvalues(p.reduced())
    return np.sort_complex(np.array([-p.lambda1, -p.lambda2, stable, unstable], dtype=complex))


def kappa_table(v0_norm: float, big_d: float, kappas) -> list[tuple[float, float, float]]:
    """(kappa, stable, unstable) rows for a grid sweep; CLI emits these as CSV."""
    rows = []
    for k in kappas:
        tv = TwoVehicleTuning(math.pi / 6.0, (v0_norm / math.sqrt(2.0),) * 2, big_d, float(k))
        stable, unstable = mu_eigenvalues(tv)
        rows.append((float(k), stable, unstable))
    return rows
