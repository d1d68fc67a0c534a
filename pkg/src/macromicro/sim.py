"""Fixed-step simulation of one axis with unilateral contact, actuator limits and
stroke end stops, plus the metric extraction used by the experiments."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import plant as pm
from .controllers import Architecture, ClosedLoop, controller_ss
from .lti import discretize, zoh


# state magnitude (m, m/s, m/s^2) beyond which a run is declared diverged
DIVERGENCE_LIMIT = 1e3


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    Ts: float = 1e-3
    duration: float = 5.0
    x_dist: float = 0.0
    noise_std: float = 0.0
    seed: int = 0
    v_max_macro: float = 0.25
    x_wall: float = 0.0

    def __post_init__(self):
        if self.Ts <= 0 or self.duration < self.Ts:
            raise ValueError("need Ts > 0 and duration >= Ts")
        if self.x_dist < 0 or self.noise_std < 0 or self.v_max_macro <= 0:
            raise ValueError("x_dist, noise_std must be >= 0 and v_max_macro > 0")


@dataclass(frozen=True)
class SimTrace:
    t: np.ndarray
    F_des: np.ndarray
    F_act: np.ndarray
    F_meas: np.ndarray
    x_M: np.ndarray
    x_tilde_mu_a: np.ndarray
    x_tilde_mu_p: np.ndarray
    x_tilde_des: np.ndarray
    v_cmd_M: np.ndarray
    v_cmd_mu: np.ndarray
    contact: np.ndarray

    def columns(self) -> list[str]:
        return [f.name for f in fields(self)]

    def __len__(self) -> int:
        return len(self.t)

    def window(self, t0: float, t1: float = math.inf) -> "SimTrace":
        m = (self.t >= t0 - 1e-12) & (self.t <= t1 + 1e-12)
        return SimTrace(*(getattr(self, c)[m] for c in self.columns()))

    def to_csv(self, path) -> Path:
        path = Path(path)
        cols = self.columns()
        data = [getattr(self, c) for c in cols]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in zip(*data):
                w.writerow([repr(float(v)) if not isinstance(v, (bool, np.bool_)) else int(v) for v in row])
        return path


def _as_function(traj) -> Callable[[np.ndarray], np.ndarray]:
    if callable(traj):
        return traj
    value = float(traj)
    return lambda t: np.full_like(np.asarray(t, dtype=float), value)


def simulate(cl: ClosedLoop, cfg: SimConfig, f_des_traj, x_des_traj=0.0) -> SimTrace:
    """Simulate ``cl`` from rest with the TCP ``cfg.x_dist`` in front of the wall.

    The plant is propagated exactly (zero-order hold) in whichever contact mode
    holds at the start of each sample; the controller is Tustin-discretized.
    """
    ap, Ts = cl.plant, cfg.Ts
    rigid = cl.kind is Architecture.ROBOT_ONLY and not cl.flexible_end_effector
    build = pm.rigid_plant if rigid else pm.coupled_plant
    modes = [zoh(build(ap, c), Ts) for c in (False, True)]
    Cp = modes[0].C
    K = discretize(controller_ss(cl.kind, cl.gains), Ts)
    Ak, Bk, Ck, Dk = K.A, K.B, K.C, K.D

    n = int(round(cfg.duration / Ts)) + 1
    t = np.arange(n) * Ts
    F_des = np.broadcast_to(np.asarray(_as_function(f_des_traj)(t), dtype=float), (n,)).copy()
    x_des = np.broadcast_to(np.asarray(_as_function(x_des_traj)(t), dtype=float), (n,)).copy()
    rng = np.random.default_rng(cfg.seed)
    noise = rng.normal(0.0, cfg.noise_std, n) if cfg.noise_std > 0 else np.zeros(n)

    x = np.zeros(modes[0].n_states)
    # positions are wall-relative inside the loop
    x[2 if rigid else pm.X_M] = -cfg.x_dist
    xc = np.zeros(K.n_states)
    rom, vmu, vM = ap.mech.rom, ap.mech.v_max, cfg.v_max_macro
    ke = ap.env.k_env
    out = {k: np.empty(n) for k in ("F_act", "F_meas", "x_M", "xa", "xp", "uM", "umu")}
    contact = np.zeros(n, dtype=bool)

    for k in range(n):
        y = Cp @ x
        pen = y[0] + y[2]
        in_contact = pen > 0.0
        F = ke * pen if in_contact else 0.0
        Fm = F + noise[k]
        meas = np.array([F_des[k], x_des[k], Fm, y[2]])
        u = Ck @ xc + Dk @ meas
        u[0] = min(max(u[0], -vM), vM)
        u[1] = min(max(u[1], -vmu), vmu)
        out["F_act"][k], out["F_meas"][k] = F, Fm
        out["x_M"][k], out["xa"][k], out["xp"][k] = y[0], y[1], y[2]
        out["uM"][k], out["umu"][k] = u[0], u[1]
        contact[k] = in_contact
        if k == n - 1:
            break
        xc = Ak @ xc + Bk @ meas
        d = modes[int(in_contact)]
        x = d.A @ x + d.B @ u
        if not rigid and abs(x[pm.X_A]) > rom:
            # spindle end stop: clamp position, kill outward motion
            s = math.copysign(1.0, x[pm.X_A])
            x[pm.X_A] = s * rom
            if x[pm.V_A] * s > 0:
                x[pm.V_A] = 0.0
                x[pm.A_A] = 0.0
        if not np.all(np.abs(x) < DIVERGENCE_LIMIT) or not np.all(np.abs(xc) < DIVERGENCE_LIMIT):
            raise SimulationError("simulation diverged")

    return SimTrace(t, F_des, out["F_act"], out["F_meas"], out["x_M"] + cfg.x_wall, out["xa"],
                    out["xp"], x_des, out["uM"], out["umu"], contact)


@dataclass(frozen=True)
class Thresholds:
    # contact counts from the first strictly positive force sample
    contact_force: float = 0.0
    force_band: float = 0.02
    force_dwell: float = 0.1
    pos_band: float = 0.01
    pos_dwell: float = 0.1
    rom: float = 2.5e-3


@dataclass(frozen=True)
class MetricSet:
    """Table-style metrics; ``None`` marks a condition that was never met."""

    t_contact: float | None
    t_force_reached: float | None
    t_pos_reached: float | None
    rmse_force: float
    rmse_pos: float
    max_force_err: float
    overshoot: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _first_dwell(t: np.ndarray, ok: np.ndarray, start: int, dwell: float) -> int | None:
    """First index >= start from which ``ok`` holds for ``dwell`` seconds."""
    if start >= len(t):
        return None
    bad = np.flatnonzero(~ok[start:]) + start
    starts = np.concatenate([[start], bad + 1])
    ends = np.concatenate([bad, [len(t)]])
    run = starts < ends
    starts, ends = starts[run], ends[run]
    long_enough = t[ends - 1] - t[starts] >= dwell - 1e-12
    return int(starts[np.argmax(long_enough)]) if long_enough.any() else None


def extract_metrics(trace: SimTrace, f_ref: float | None = None,
                    thresholds: Thresholds = Thresholds(), position: bool = True) -> MetricSet:
    """Contact, settling and error metrics of one trace.

    ``f_ref`` scales the force band (defaults to the final desired force);
    ``position=False`` omits the micro position metric (rigid end-effector).
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    t, th = trace.t, thresholds
    F_final = float(trace.F_des[-1])
    f_ref = abs(F_final) if f_ref is None else abs(f_ref)
    err = trace.F_des - trace.F_act

    hit = np.flatnonzero(trace.F_act > th.contact_force)
    i_contact = int(hit[0]) if hit.size else None
    t_contact = float(t[i_contact]) if i_contact is not None else None

    i_force = None
    if i_contact is not None:
        i_force = _first_dwell(t, np.abs(err) <= th.force_band * f_ref, i_contact, th.force_dwell)
    t_force = float(t[i_force]) if i_force is not None else None

    t_pos = None
    if position and i_force is not None:
        ok = np.abs(trace.x_tilde_mu_p - trace.x_tilde_des) <= th.pos_band * th.rom
        i_pos = _first_dwell(t, ok, i_force, th.pos_dwell)
        t_pos = float(t[i_pos]) if i_pos is not None else None

    overshoot = 0.0
    if F_final != 0:
        overshoot = max(float(np.max(trace.F_act - F_final) / F_final), 0.0)
    return MetricSet(
        t_contact=t_contact,
        t_force_reached=t_force,
        t_pos_reached=t_pos,
        rmse_force=float(np.sqrt(np.mean(err ** 2))),
        rmse_pos=float(np.sqrt(np.mean((trace.x_tilde_mu_p - trace.x_tilde_des) ** 2))),
        max_force_err=float(np.max(np.abs(err))),
        overshoot=overshoot,
    )
