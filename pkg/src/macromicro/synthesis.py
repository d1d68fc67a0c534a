"""Weighted generalized plant and fixed-structure H-infinity tuning of the gain set,
including the search for the largest feasible force-weight crossover."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.optimize

from . import plant as pm
from .controllers import Architecture, ClosedLoop, ControllerSet, force_tracking_ss, generalized_loop
from .lti import LTIError, StateSpace, TransferFunction, append, connect, hinf_norm, step_response, tf_to_ss


class SynthesisError(RuntimeError):
    pass


@dataclass(frozen=True)
class WeightSpec:
    """Performance weights. Exogenous inputs ``(r, w)`` are in units of ``input_unit`` newtons."""

    omega_co_F: float = 2.0 * math.pi
    K_lf_F: float = 100.0
    K_hf_F: float = 10.0
    K_lf_x: float = 1000.0
    K_hf_x: float = 1.0
    omega_co_x: float = 2.0 * math.pi
    K_vdot: float = 10.0
    F_des_norm: float = 20.0
    x_rom: float = 2.5e-3
    v_max: float = 0.1
    input_unit: float = 1.0
    disturbance_scale: float = 1.0
    # step-overshoot ceiling applied on top of the norm bound (None disables it)
    max_overshoot: float | None = 0.01

    def __post_init__(self):
        if not (self.K_lf_F > self.K_hf_F > 0 and self.K_lf_x > self.K_hf_x > 0):
            raise ValueError("weights need K_lf > K_hf > 0")
        if min(self.omega_co_F, self.omega_co_x) <= 0:
            raise ValueError("crossover frequencies must be positive")
        if min(self.F_des_norm, self.x_rom, self.v_max, self.K_vdot, self.input_unit) <= 0:
            raise ValueError("normalizers must be positive")
        if self.disturbance_scale < 0:
            raise ValueError("disturbance_scale must be nonnegative")

    def with_(self, **kw) -> "WeightSpec":
        return replace(self, **kw)


def _weight(K_lf: float, K_hf: float, w: float) -> TransferFunction:
    return TransferFunction([K_hf, w], [1.0, w / K_lf])


def weight_wf(spec: WeightSpec) -> TransferFunction:
    """Force-error weight: gain ``K_lf_F`` at DC falling to ``K_hf_F``."""
    return _weight(spec.K_lf_F, spec.K_hf_F, spec.omega_co_F)


def weight_wx(spec: WeightSpec) -> TransferFunction:
    return _weight(spec.K_lf_x, spec.K_hf_x, spec.omega_co_x)


def build_generalized_plant(ap: pm.AxisPlant, spec: WeightSpec, gains: ControllerSet,
                            kind: Architecture = Architecture.PROPOSED) -> StateSpace:
    """Weighted closed loop from ``(r, w)`` to ``(p_F, p_x, p_xdot)`` in contact.

    For the robot-only variant the micro channels are identically zero, so only
    ``p_F`` contributes.
    """
    L = generalized_loop(ClosedLoop(ap, kind, gains), True, validate=False)
    # inputs (F_des, w), outputs (F_act, x_tilde_p, v_mu_des)
    L = L.subsystem(outputs=[0, 1, 2], inputs=[0, 2])
    scale = spec.input_unit * np.array([1.0, spec.disturbance_scale])
    B, D = L.B * scale, L.D * scale
    Fn, xr = spec.F_des_norm, spec.x_rom
    C = np.vstack([-L.C[0] / Fn, -L.C[1] / xr, L.C[2]])
    De = np.vstack([scale * np.array([1.0, 0.0]) / Fn - D[0] / Fn, -D[1] / xr, D[2]])
    errors = StateSpace(L.A, B, C, De)
    W = append(tf_to_ss(weight_wf(spec)), tf_to_ss(weight_wx(spec)), StateSpace.gain([[spec.K_vdot]]))
    return connect(errors, W, "series")


def step_overshoot(ap: pm.AxisPlant, kind: Architecture, gains: ControllerSet,
                   duration: float | None = None) -> float:
    """Relative overshoot of ``F_act`` for a force step in contact (linear model)."""
    ss = force_tracking_ss(ClosedLoop(ap, kind, gains))
    if duration is None:
        slow = -np.max(ss.poles().real)
        duration = float(np.clip(8.0 / max(slow, 1e-9), 1.0, 20.0))
    _, y = step_response(ss, duration)
    return float(max(y.max() - 1.0, 0.0))


@dataclass(frozen=True)
class SynthesisResult:
    gains: ControllerSet
    achieved_norm: float
    omega_co_F_final: float
    iterations: int
    per_channel_peaks: tuple[float, float, float]
    kind: Architecture = Architecture.PROPOSED
    overshoot: float = 0.0
    # (omega_co_F, achieved_norm) of every crossover grid point tried
    trace: tuple = field(default_factory=tuple)

    @property
    def feasible(self) -> bool:
        return self.achieved_norm < 1.0


_FREE = {
    Architecture.PROPOSED: ("c_ctrl_F_M", "c_ctrl_F_mu", "k_ctrl_x", "c_ctrl_x"),
    Architecture.ROBOT_ONLY: ("c_ctrl_F_M",),
}
_UNSTABLE = 1e3


def default_init(kind: Architecture) -> ControllerSet:
    if kind is Architecture.ROBOT_ONLY:
        return ControllerSet(c_ctrl_F_M=2e4)
    return ControllerSet(c_ctrl_F_M=2e4, c_ctrl_F_mu=3e3, k_ctrl_x=5.0, c_ctrl_x=1e-3)


class _Objective:
    """Norm (plus optional overshoot ceiling) as a function of log-gains."""

    def __init__(self, ap, spec, kind, base: ControllerSet):
        self.ap, self.spec, self.kind, self.base = ap, spec, kind, base
        self.names = _FREE[kind]
        self.evals = 0
        self._cache: dict[bytes, float] = {}

    def gains(self, theta) -> ControllerSet:
        return replace(self.base, **{n: float(np.exp(v)) for n, v in zip(self.names, theta)})

    def theta(self, gains: ControllerSet) -> np.ndarray:
        return np.log([max(getattr(gains, n), 1e-12) for n in self.names])

    def __call__(self, theta) -> float:
        theta = np.clip(np.asarray(theta, dtype=float), -30.0, 30.0)
        key = theta.tobytes()
        if key in self._cache:
            return self._cache[key]
        self.evals += 1
        g = self.gains(theta)
        try:
            T = build_generalized_plant(self.ap, self.spec, g, self.kind)
            worst = float(np.max(T.poles().real))
            if worst >= -1e-9:
                val = _UNSTABLE + worst
            else:
                val = hinf_norm(T, 1e-4)
                lim = self.spec.max_overshoot
                if lim is not None and self.kind is Architecture.PROPOSED and val < 1.0:
                    os_ = step_overshoot(self.ap, self.kind, g)
                    if os_ > lim:
                        val = 1.0 + 10.0 * (os_ - lim)
        except (LTIError, np.linalg.LinAlgError):
            val = _UNSTABLE * 10
        self._cache[key] = val
        return val


def _stabilize(obj: _Objective, theta0: np.ndarray) -> np.ndarray:
    """Log-spaced damping grid around the initial point; returns the best candidate."""
    best, best_val = theta0, obj(theta0)
    if best_val < _UNSTABLE:
        return best
    dampings = np.log(np.geomspace(1e2, 1e6, 9))
    for dM in dampings:
        cands = [dM] if obj.kind is Architecture.ROBOT_ONLY else [
            np.array([dM, dm, *theta0[2:]]) for dm in dampings]
        for c in cands:
            c = np.atleast_1d(c)
            v = obj(c)
            if v < best_val:
                best, best_val = c, v
    if best_val >= _UNSTABLE:
        raise SynthesisError("no stabilizing initial point found")
    return best


def tune_fixed_structure(ap: pm.AxisPlant, spec: WeightSpec, init: ControllerSet | None = None,
                         kind: Architecture = Architecture.PROPOSED, seed: int = 0,
                         restarts: int = 5, budget: int = 2000,
                         stop_below: float | None = None) -> SynthesisResult:
    """Minimize the weighted closed-loop norm over the free gains (log-space simplex search).

    Random restarts perturb the best point so far; they are skipped once the
    norm is below ``stop_below``.
    """
    if kind not in _FREE:
        raise ValueError(f"{kind.value} is not synthesized by norm minimization")
    init = init or default_init(kind)
    obj = _Objective(ap, spec, kind, init)
    rng = np.random.default_rng(seed)
    theta = _stabilize(obj, obj.theta(init))
    best_x, best_f = theta, obj(theta)
    for r in range(restarts + 1):
        if r and stop_below is not None and best_f < stop_below:
            break
        x0 = best_x if r == 0 else best_x + rng.normal(0.0, 1.0, best_x.size)
        res = scipy.optimize.minimize(obj, x0, method="Nelder-Mead",
                                      options=dict(maxfev=budget, xatol=1e-3, fatol=1e-5))
        if res.fun < best_f:
            best_x, best_f = np.clip(res.x, -30.0, 30.0), float(res.fun)
    if best_f >= _UNSTABLE:
        raise SynthesisError("optimizer exceeded evaluation budget without a stabilizing point")
    gains = obj.gains(best_x)
    T = build_generalized_plant(ap, spec, gains, kind)
    peaks = tuple(float(hinf_norm(T.subsystem(outputs=[i]), 1e-4)) for i in range(3))
    norm = float(hinf_norm(T, 1e-6))
    os_ = step_overshoot(ap, kind, gains)
    return SynthesisResult(gains, norm, spec.omega_co_F, obj.evals, peaks, kind, os_)


def _acceptable(res: SynthesisResult, spec: WeightSpec) -> bool:
    if not res.feasible:
        return False
    lim = spec.max_overshoot
    return lim is None or res.kind is not Architecture.PROPOSED or res.overshoot <= lim


def crossover_search(ap: pm.AxisPlant, spec_base: WeightSpec,
                     kind: Architecture = Architecture.PROPOSED, seed: int = 0,
                     f_start_hz: float = 0.1, ratio: float = 1.2, max_points: int = 60,
                     init: ControllerSet | None = None, budget: int = 2000) -> SynthesisResult:
    """Largest feasible force-weight crossover on a geometric grid, refined once."""
    trace = []
    best: SynthesisResult | None = None
    gains = init or default_init(kind)

    def attempt(f_hz: float, start: ControllerSet) -> SynthesisResult:
        spec = spec_base.with_(omega_co_F=2.0 * math.pi * f_hz)
        res = tune_fixed_structure(ap, spec, start, kind, seed=seed, budget=budget, stop_below=1.0)
        trace.append((spec.omega_co_F, res.achieved_norm))
        return res

    f = f_start_hz
    for _ in range(max_points):
        res = attempt(f, gains)
        if not _acceptable(res, spec_base):
            break
        best, gains = res, res.gains
        f *= ratio
    else:
        f = None
    if best is None:
        raise SynthesisError("even the smallest crossover frequency is infeasible")
    if f is not None:
        res = attempt(f / math.sqrt(ratio), best.gains)
        if _acceptable(res, spec_base):
            best = res
    return replace(best, trace=tuple(trace))


def write_synthesis_report(result: SynthesisResult, path) -> Path:
    """Structured-text (INI) record of the tuned gains and the achieved norms."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    g = result.gains
    cp["result"] = {
        "architecture": result.kind.value,
        "omega_co_F_rad_s": repr(result.omega_co_F_final),
        "omega_co_F_Hz": repr(result.omega_co_F_final / (2 * math.pi)),
        "achieved_norm": repr(result.achieved_norm),
        "p_F_peak": repr(result.per_channel_peaks[0]),
        "p_x_peak": repr(result.per_channel_peaks[1]),
        "p_xdot_peak": repr(result.per_channel_peaks[2]),
        "step_overshoot": repr(result.overshoot),
        "evaluations": str(result.iterations),
    }
    cp["gains"] = {k: repr(float(v)) for k, v in g.as_dict().items()}
    if result.trace:
        cp["search"] = {f"point_{i:02d}": f"{w!r}, {n!r}" for i, (w, n) in enumerate(result.trace)}
    path = Path(path)
    with open(path, "w") as fh:
        cp.write(fh)
    return path
