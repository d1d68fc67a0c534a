"""Surrogate models of one Cartesian axis of the macro-micro manipulator.

Positions in the linear models are measured relative to the contact surface
(``x_wall``); the simulator adds the wall offset back when reporting world
coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .lti import StateSpace, TransferFunction

HZ = 2.0 * math.pi


@dataclass(frozen=True)
class MacroParams:
    K_M: float
    zeta_M: float
    omega_cM: float

    def __post_init__(self):
        if min(self.K_M, self.zeta_M, self.omega_cM) <= 0:
            raise ValueError("macro parameters must be positive")


@dataclass(frozen=True)
class MicroActiveParams:
    K_mu_a: float
    zeta_mu_a: float
    omega_c_mu_a: float

    def __post_init__(self):
        if min(self.K_mu_a, self.zeta_mu_a, self.omega_c_mu_a) <= 0:
            raise ValueError("micro active-side parameters must be positive")


@dataclass(frozen=True)
class MechanicalParams:
    """Passive side of the flexure hinge. ``c_mu=None`` selects 10% hinge damping."""

    k_mu: float
    m_mu_p: float = 0.5
    m_load: float = 1.5
    c_mu: float | None = None
    rom: float = 2.5e-3
    v_max: float = 0.1
    hinge_damping_ratio: float = 0.1

    def __post_init__(self):
        if self.m_mu_p < 0 or self.m_load < 0 or self.mass <= 0:
            raise ValueError("masses must be nonnegative with positive total")
        if self.k_mu <= 0 or self.rom <= 0 or self.v_max <= 0:
            raise ValueError("k_mu, rom and v_max must be positive")
        if self.c_mu is None:
            c = 2.0 * self.hinge_damping_ratio * math.sqrt(self.k_mu * self.mass)
            object.__setattr__(self, "c_mu", c)
        if self.c_mu < 0:
            raise ValueError("c_mu must be nonnegative")

    @property
    def mass(self) -> float:
        return self.m_mu_p + self.m_load


@dataclass(frozen=True)
class EnvironmentModel:
    k_env: float
    x_wall: float = 0.0

    def __post_init__(self):
        if self.k_env <= 0:
            raise ValueError("k_env must be positive")


@dataclass(frozen=True)
class AxisPlant:
    macro: MacroParams
    micro_active: MicroActiveParams
    mech: MechanicalParams
    env: EnvironmentModel
    axis_label: str = "X"


# Identified values (Hz and N/mm converted to SI).
MACRO_IDENTIFIED = {
    "X": MacroParams(1.25, 1.0, 3.20 * HZ),
    "Y": MacroParams(1.26, 1.0, 3.19 * HZ),
    "Z": MacroParams(1.25, 1.0, 3.19 * HZ),
}
MICRO_ACTIVE_IDENTIFIED = {
    "X": MicroActiveParams(1.29, 0.45, 26.87 * HZ),
    "Y": MicroActiveParams(1.30, 0.45, 27.05 * HZ),
    "Z": MicroActiveParams(1.30, 0.42, 20.71 * HZ),
}
HINGE_STIFFNESS = {
    "low": {"X": 15e3, "Y": 15e3, "Z": 20e3},
    "high": {"X": 30e3, "Y": 30e3, "Z": 40e3},
}
ENV_STIFFNESS = {"X": 40e3, "Y": 30e3, "Z": 60e3}


def default_plant(axis: str = "X", hinge: str = "low", **mech_overrides) -> AxisPlant:
    axis = axis.upper()
    mech = MechanicalParams(k_mu=HINGE_STIFFNESS[hinge][axis], **mech_overrides)
    return AxisPlant(MACRO_IDENTIFIED[axis], MICRO_ACTIVE_IDENTIFIED[axis], mech,
                     EnvironmentModel(ENV_STIFFNESS[axis]), axis)


def _lowpass2(K: float, zeta: float, wc: float) -> TransferFunction:
    return TransferFunction([K * wc ** 2], [1.0, 2.0 * zeta * wc, wc ** 2])


def macro_tf(p: MacroParams) -> TransferFunction:
    """Commanded to actual macro velocity."""
    return _lowpass2(p.K_M, p.zeta_M, p.omega_cM)


def micro_active_tf(p: MicroActiveParams) -> TransferFunction:
    """Commanded to actual active-side velocity (relative to the TCP frame)."""
    return _lowpass2(p.K_mu_a, p.zeta_mu_a, p.omega_c_mu_a)


def micro_passive_tf(mech: MechanicalParams, k_env: float = 0.0) -> TransferFunction:
    """Active-side to passive-side displacement with the macro held still."""
    if k_env < 0:
        raise ValueError("k_env must be nonnegative")
    return TransferFunction([mech.c_mu, mech.k_mu],
                            [mech.mass, mech.c_mu, mech.k_mu + k_env])


def micro_full_tf(pa: MicroActiveParams, mech: MechanicalParams,
                  k_env: float = 0.0) -> TransferFunction:
    """Active-side velocity command to passive-side displacement."""
    return micro_passive_tf(mech, k_env) * TransferFunction([1.0], [1.0, 0.0]) * micro_active_tf(pa)


def env_force(x_p: float, env: EnvironmentModel) -> float:
    """Unilateral spring reaction for world position ``x_p`` of the passive side."""
    pen = x_p - env.x_wall
    return env.k_env * pen if pen > 0 else 0.0


# State layout of the flexible plant.
V_M, A_M, X_M, V_A, A_A, X_A, X_P, V_P = range(8)
N_FLEX = 8
N_RIGID = 3
OUTPUTS = ("x_M", "x_tilde_mu_a", "x_tilde_mu_p", "F_act")


def coupled_plant(ap: AxisPlant, in_contact: bool, disturbance: bool = False) -> StateSpace:
    """Linear 1-DoF plant for one contact mode.

    Inputs ``(v_M_des, v_mu_a_des[, w])`` where ``w`` is an external force on the
    passive mass acting like additional contact reaction. Outputs
    ``(x_M, x_tilde_mu_a, x_tilde_mu_p, F_act)``; positions are wall-relative.
    """
    M, Ma, me, env = ap.macro, ap.micro_active, ap.mech, ap.env
    ke = env.k_env if in_contact else 0.0
    m, c, k = me.mass, me.c_mu, me.k_mu
    A = np.zeros((N_FLEX, N_FLEX))
    B = np.zeros((N_FLEX, 3))
    A[V_M, A_M] = 1.0
    A[A_M, V_M] = -M.omega_cM ** 2
    A[A_M, A_M] = -2.0 * M.zeta_M * M.omega_cM
    B[A_M, 0] = M.K_M * M.omega_cM ** 2
    A[X_M, V_M] = 1.0
    wa = Ma.omega_c_mu_a
    A[V_A, A_A] = 1.0
    A[A_A, V_A] = -wa ** 2
    A[A_A, A_A] = -2.0 * Ma.zeta_mu_a * wa
    B[A_A, 1] = Ma.K_mu_a * wa ** 2
    A[X_A, V_A] = 1.0
    # absolute passive acceleration = macro acceleration + relative acceleration
    A[X_P, V_P] = 1.0
    A[V_P, X_M] = -ke / m
    A[V_P, X_P] = -(ke + k) / m
    A[V_P, V_P] = -c / m
    A[V_P, X_A] = k / m
    A[V_P, V_A] = c / m
    A[V_P, A_M] = -1.0
    B[V_P, 2] = -1.0 / m
    C = np.zeros((4, N_FLEX))
    C[0, X_M] = 1.0
    C[1, X_A] = 1.0
    C[2, X_P] = 1.0
    C[3, X_M] = ke
    C[3, X_P] = ke
    nu = 3 if disturbance else 2
    return StateSpace(A, B[:, :nu], C, np.zeros((4, nu)))


def rigid_plant(ap: AxisPlant, in_contact: bool, disturbance: bool = False) -> StateSpace:
    """Macro only with the end-effector locked rigid; same I/O layout as ``coupled_plant``.

    The micro input and the disturbance have no effect (velocity-controlled robot).
    """
    M = ap.macro
    ke = ap.env.k_env if in_contact else 0.0
    A = np.array([[0.0, 1.0, 0.0],
                  [-M.omega_cM ** 2, -2.0 * M.zeta_M * M.omega_cM, 0.0],
                  [1.0, 0.0, 0.0]])
    nu = 3 if disturbance else 2
    B = np.zeros((3, nu))
    B[1, 0] = M.K_M * M.omega_cM ** 2
    C = np.zeros((4, 3))
    C[0, 2] = 1.0
    C[3, 2] = ke
    return StateSpace(A, B, C, np.zeros((4, nu)))


def with_mech(ap: AxisPlant, **changes) -> AxisPlant:
    """Copy of ``ap`` with mechanical fields replaced (``c_mu`` recomputed unless given)."""
    changes.setdefault("c_mu", None)
    return replace(ap, mech=replace(ap.mech, **changes))
