"""Admittance-type force laws, the micro PDT1 position law, and closed-loop wiring
for the proposed architecture and the two baselines."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, asdict, replace

import numpy as np

from . import plant as pm
from .lti import StateSpace, TransferFunction, lft, tf_to_ss


class Architecture(str, enum.Enum):
    PROPOSED = "Proposed"
    LEADER_FOLLOWER = "LeaderFollower"
    ROBOT_ONLY = "RobotOnly"

    @property
    def short(self) -> str:
        return {"Proposed": "Ours", "LeaderFollower": "LF", "RobotOnly": "RB"}[self.value]

    @classmethod
    def parse(cls, name: str) -> "Architecture":
        def norm(x: str) -> str:
            return x.strip().lower().replace("-", "").replace("_", "")

        key = norm(name)
        for a in cls:
            if key in (norm(a.value), norm(a.short), norm(a.name)):
                return a
        raise ValueError(f"unknown architecture {name!r}")


@dataclass(frozen=True)
class ControllerSet:
    """Gains of the force and position laws. A damping of ``inf`` disables its path.

    For the leader-follower baseline ``k_ctrl_x``/``c_ctrl_x`` parametrize the
    macro-side PD on the micro deflection.
    """

    c_ctrl_F_M: float = math.inf
    c_ctrl_F_mu: float = math.inf
    k_ctrl_x: float = 0.0
    c_ctrl_x: float = 0.0
    T_filter: float = 2e-3

    def __post_init__(self):
        if self.T_filter <= 0:
            raise ValueError("T_filter must be positive")
        if self.c_ctrl_F_M <= 0 or self.c_ctrl_F_mu <= 0:
            raise ValueError("force dampings must be positive (use inf to disable)")
        if self.k_ctrl_x < 0 or self.c_ctrl_x < 0:
            raise ValueError("position gains must be nonnegative")

    def as_dict(self) -> dict:
        return asdict(self)

    def with_(self, **kw) -> "ControllerSet":
        return replace(self, **kw)


@dataclass(frozen=True)
class ClosedLoop:
    plant: pm.AxisPlant
    kind: Architecture
    gains: ControllerSet
    # RobotOnly with a compliant (but undriven) end-effector instead of a rigid one
    flexible_end_effector: bool = False


def macro_force_law(F_err, gains: ControllerSet):
    """Force error to commanded macro velocity."""
    return F_err / gains.c_ctrl_F_M


def micro_force_law(F_err, gains: ControllerSet):
    """Force error to the force part of the commanded active-side velocity."""
    return F_err / gains.c_ctrl_F_mu


def micro_position_law_tf(gains: ControllerSet) -> TransferFunction:
    """PDT1 law from passive-side position error to active-side velocity command."""
    T = gains.T_filter
    k, c = gains.k_ctrl_x, gains.c_ctrl_x
    return TransferFunction([k * T + c, k], [T, 1.0])


def _check(cl: ClosedLoop) -> None:
    g, kind = cl.gains, cl.kind
    if kind is Architecture.PROPOSED:
        ok = math.isfinite(g.c_ctrl_F_M) or math.isfinite(g.c_ctrl_F_mu)
    elif kind is Architecture.LEADER_FOLLOWER:
        ok = math.isfinite(g.c_ctrl_F_mu)
    else:
        ok = math.isfinite(g.c_ctrl_F_M)
    if not ok:
        raise ValueError(f"inconsistent gains for {kind.value}: no active force path")


def controller_ss(kind: Architecture, gains: ControllerSet) -> StateSpace:
    """Controller from ``(F_des, x_tilde_des, F_meas, x_tilde_p)`` to ``(v_M_des, v_mu_des)``."""
    pos = tf_to_ss(micro_position_law_tf(gains))  # 1 state, input e_x
    gM = 0.0 if math.isinf(gains.c_ctrl_F_M) else 1.0 / gains.c_ctrl_F_M
    gmu = 0.0 if math.isinf(gains.c_ctrl_F_mu) else 1.0 / gains.c_ctrl_F_mu
    # e_F = F_des - F_meas, e_x = x_des - x_p
    eF = np.array([1.0, 0.0, -1.0, 0.0])
    ex = np.array([0.0, 1.0, 0.0, -1.0])
    B = pos.B @ ex[None, :]
    Cp, Dp = pos.C, pos.D[0, 0]
    if kind is Architecture.PROPOSED:
        C = np.vstack([np.zeros_like(Cp), Cp])
        D = np.vstack([gM * eF, gmu * eF + Dp * ex])
    elif kind is Architecture.LEADER_FOLLOWER:
        # macro recentres the micro: moves toward the passive-side deflection
        C = np.vstack([-Cp, np.zeros_like(Cp)])
        D = np.vstack([-Dp * ex, gmu * eF])
    else:
        C = np.zeros((2, 1))
        D = np.vstack([gM * eF, np.zeros(4)])
        B = np.zeros_like(B)
    return StateSpace(pos.A, B, C, D)


def open_plant(ap: pm.AxisPlant, kind: Architecture, in_contact: bool,
               flexible_end_effector: bool = False) -> StateSpace:
    if kind is Architecture.ROBOT_ONLY and not flexible_end_effector:
        return pm.rigid_plant(ap, in_contact, disturbance=True)
    return pm.coupled_plant(ap, in_contact, disturbance=True)


def generalized_loop(cl: ClosedLoop, in_contact: bool = True, validate: bool = True) -> StateSpace:
    """Closed loop with inputs ``(F_des, x_tilde_des, w)`` and outputs
    ``(F_act, x_tilde_p, v_mu_des, v_M_des, x_M, x_tilde_a)``.

    ``w`` is an additive force at the contact-force summation. ``validate=False``
    admits gain sets without any force path (open loop).
    """
    if validate:
        _check(cl)
    G = open_plant(cl.plant, cl.kind, in_contact, cl.flexible_end_effector)
    n = G.n_states
    # P inputs [F_des, x_des, w, u_M, u_mu]; outputs [z (6); y (4)]
    A = G.A
    # w is an additive force at the contact-force summation (output disturbance)
    B = np.hstack([np.zeros((n, 3)), G.B[:, 0:2]])
    Cz = np.vstack([G.C[3], G.C[2], np.zeros(n), np.zeros(n), G.C[0], G.C[1]])
    Dz = np.zeros((6, 5))
    Dz[0, 2] = 1.0
    Dz[2, 4] = 1.0
    Dz[3, 3] = 1.0
    Cy = np.vstack([np.zeros(n), np.zeros(n), G.C[3], G.C[2]])
    Dy = np.zeros((4, 5))
    Dy[0, 0] = 1.0
    Dy[1, 1] = 1.0
    Dy[2, 2] = 1.0
    P = StateSpace(A, B, np.vstack([Cz, Cy]), np.vstack([Dz, Dy]))
    return lft(P, controller_ss(cl.kind, cl.gains), n_meas=4, n_ctrl=2)


def build_closed_loop(cl: ClosedLoop, in_contact: bool = True) -> StateSpace:
    """Inputs ``(F_des, x_tilde_des)``; outputs ``(F_act, x_tilde_p, v_mu_des, v_M_des)``."""
    return generalized_loop(cl, in_contact).subsystem(outputs=[0, 1, 2, 3], inputs=[0, 1])


def force_tracking_ss(cl: ClosedLoop) -> StateSpace:
    """SISO in-contact loop ``F_des -> F_act``."""
    return generalized_loop(cl, True).subsystem(outputs=[0], inputs=[0])


class TuningError(RuntimeError):
    pass


def step_overshoot_sim(ap: pm.AxisPlant, kind: Architecture, gains: ControllerSet,
                       F_step: float = 20.0, duration: float = 4.0, Ts: float = 1e-3) -> float:
    """Overshoot of a simulated force step starting at the contact surface."""
    from .sim import SimConfig, SimulationError, simulate

    try:
        tr = simulate(ClosedLoop(ap, kind, gains), SimConfig(Ts=Ts, duration=duration), F_step)
    except SimulationError:
        return math.inf
    return max(float(tr.F_act.max() - F_step) / F_step, 0.0)


def tune_lf(ap: pm.AxisPlant, overshoot_target: float = 0.10, *, F_step: float = 20.0,
            factor: float = 1.25, pd_ratio: float = 0.005, onset: float = 0.005,
            c_start: float = 1e5, c_min: float = 1.0, kx_start: float = 1.0,
            kx_max: float = 1e5, bisections: int = 6, duration: float = 4.0) -> ControllerSet:
    """Two-step leader-follower tuning on simulated force steps.

    Step 1 raises the micro force gain (``1/c_ctrl_F_mu``) geometrically until
    the step overshoots by more than ``onset`` and keeps the last gain below.
    Step 2 scales the macro P and D gains together (``D/P = pd_ratio``) until the
    overshoot reaches the target, then bisects geometrically.
    """
    if not 0 < overshoot_target <= 0.5:
        raise ValueError("overshoot_target must lie in (0, 0.5]")
    kind = Architecture.LEADER_FOLLOWER

    def os_of(g: ControllerSet) -> float:
        return step_overshoot_sim(ap, kind, g, F_step, duration)

    g = ControllerSet(c_ctrl_F_mu=c_start)
    if os_of(g) > onset:
        raise TuningError("LF tuning failed: initial force gain already overshoots")
    while True:
        nxt = g.with_(c_ctrl_F_mu=g.c_ctrl_F_mu / factor)
        if nxt.c_ctrl_F_mu < c_min:
            raise TuningError("LF tuning failed: no force overshoot within gain bounds")
        if os_of(nxt) > onset:
            break
        g = nxt

    def with_pd(kx: float) -> ControllerSet:
        return g.with_(k_ctrl_x=kx, c_ctrl_x=pd_ratio * kx)

    lo, hi = None, kx_start
    while os_of(with_pd(hi)) < overshoot_target:
        lo, hi = hi, hi * factor
        if hi > kx_max:
            raise TuningError("LF tuning failed: target overshoot not reachable")
    if lo is None:
        lo = 0.0
    best = hi
    for _ in range(bisections):
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * hi
        if os_of(with_pd(mid)) < overshoot_target:
            lo = mid
        else:
            hi = mid
    # pick whichever bracket end lands closer to the target
    best = min((lo, hi) if lo > 0 else (hi,), key=lambda k: abs(os_of(with_pd(k)) - overshoot_target))
    return with_pd(best)
