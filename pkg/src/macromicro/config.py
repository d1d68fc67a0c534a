"""INI configuration: plant, weights, simulation settings and gain sets.

Values in the file use the engineering units of the data sheets (Hz, N/mm, mm,
kg, mm/s); everything is converted to SI on load and back on save.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import plant as pm
from .controllers import Architecture, ControllerSet
from .sim import SimConfig
from .synthesis import WeightSpec

HZ = 2.0 * math.pi
MM = 1e-3
N_PER_MM = 1e3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    plant: pm.AxisPlant
    weights: WeightSpec = WeightSpec()
    sim: SimConfig = SimConfig()
    gains: dict = field(default_factory=dict)

    def with_axis(self, axis: str) -> "Config":
        return replace(self, plant=pm.default_plant(axis))


def default_config(axis: str = "X", hinge: str = "low") -> Config:
    return Config(pm.default_plant(axis, hinge))


def _get(sec, key, default, scale=1.0):
    if sec is None or key not in sec:
        return default
    try:
        return float(sec[key]) * scale
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key}: not a number") from exc


def _gains_to_section(g: ControllerSet) -> dict:
    return {k: repr(float(v)) for k, v in g.as_dict().items()}


def gains_from_section(sec) -> ControllerSet:
    base = ControllerSet()
    vals = {}
    for k in base.as_dict():
        if k in sec:
            vals[k] = float(sec[k])
    try:
        return base.with_(**vals)
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {exc}") from exc


def parse_config(cp: configparser.ConfigParser, axis: str | None = None) -> Config:
    top = cp["plant"] if cp.has_section("plant") else None
    axis = (axis or (top.get("axis") if top else None) or "X").upper()
    hinge = (top.get("hinge") if top else None) or "low"
    if axis not in pm.MACRO_IDENTIFIED or hinge not in pm.HINGE_STIFFNESS:
        raise ConfigError(f"unknown axis {axis!r} or hinge variant {hinge!r}")
    base = pm.default_plant(axis, hinge)
    sec = {name: (cp[name] if cp.has_section(name) else None)
           for name in ("macro", "micro_active", "mechanical", "environment", "weights", "simulation")}

    try:
        macro = pm.MacroParams(
            _get(sec["macro"], "gain", base.macro.K_M),
            _get(sec["macro"], "damping", base.macro.zeta_M),
            _get(sec["macro"], "cutoff_hz", base.macro.omega_cM / HZ, HZ))
        micro = pm.MicroActiveParams(
            _get(sec["micro_active"], "gain", base.micro_active.K_mu_a),
            _get(sec["micro_active"], "damping", base.micro_active.zeta_mu_a),
            _get(sec["micro_active"], "cutoff_hz", base.micro_active.omega_c_mu_a / HZ, HZ))
        m, bm = sec["mechanical"], base.mech
        c_mu = _get(m, "hinge_damping_ns_per_m", None)
        mech = pm.MechanicalParams(
            k_mu=_get(m, "hinge_stiffness_n_per_mm", bm.k_mu / N_PER_MM, N_PER_MM),
            m_mu_p=_get(m, "passive_mass_kg", bm.m_mu_p),
            m_load=_get(m, "payload_kg", bm.m_load),
            c_mu=c_mu,
            rom=_get(m, "rom_mm", bm.rom / MM, MM),
            v_max=_get(m, "v_max_mm_s", bm.v_max / MM, MM),
            hinge_damping_ratio=_get(m, "hinge_damping_ratio", bm.hinge_damping_ratio))
        e = sec["environment"]
        env = pm.EnvironmentModel(_get(e, "stiffness_n_per_mm", base.env.k_env / N_PER_MM, N_PER_MM),
                                  _get(e, "wall_mm", 0.0, MM))
        plant = pm.AxisPlant(macro, micro, mech, env, axis)

        w, dw = sec["weights"], WeightSpec()
        mo = w.get("max_overshoot", None) if w is not None else None
        weights = WeightSpec(
            omega_co_F=_get(w, "crossover_f_hz", dw.omega_co_F / HZ, HZ),
            K_lf_F=_get(w, "K_lf_F", dw.K_lf_F), K_hf_F=_get(w, "K_hf_F", dw.K_hf_F),
            K_lf_x=_get(w, "K_lf_x", dw.K_lf_x), K_hf_x=_get(w, "K_hf_x", dw.K_hf_x),
            omega_co_x=_get(w, "crossover_x_hz", dw.omega_co_x / HZ, HZ),
            K_vdot=_get(w, "K_vdot", dw.K_vdot),
            F_des_norm=_get(w, "force_norm_n", dw.F_des_norm),
            x_rom=_get(w, "rom_mm", dw.x_rom / MM, MM),
            v_max=_get(w, "v_max_mm_s", dw.v_max / MM, MM),
            disturbance_scale=_get(w, "disturbance_scale", dw.disturbance_scale),
            max_overshoot=dw.max_overshoot if mo is None else (None if mo.strip().lower() == "none" else float(mo)))

        s, ds = sec["simulation"], SimConfig()
        sim = SimConfig(
            Ts=_get(s, "sample_time_s", ds.Ts), duration=_get(s, "duration_s", ds.duration),
            x_dist=_get(s, "x_dist_mm", ds.x_dist / MM, MM),
            noise_std=_get(s, "noise_std_n", ds.noise_std),
            seed=int(_get(s, "seed", ds.seed)),
            v_max_macro=_get(s, "v_max_macro_mm_s", ds.v_max_macro / MM, MM),
            x_wall=env.x_wall)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    gains = {}
    for name in cp.sections():
        if name.startswith("gains."):
            gains[Architecture.parse(name.split(".", 1)[1])] = gains_from_section(cp[name])
    return Config(plant, weights, sim, gains)


def load_config(path, axis: str | None = None) -> Config:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return parse_config(cp, axis)


def to_parser(cfg: Config) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    ap, w, s = cfg.plant, cfg.weights, cfg.sim
    cp["plant"] = {"axis": ap.axis_label}
    cp["macro"] = {"gain": repr(ap.macro.K_M), "damping": repr(ap.macro.zeta_M),
                   "cutoff_hz": repr(ap.macro.omega_cM / HZ)}
    cp["micro_active"] = {"gain": repr(ap.micro_active.K_mu_a), "damping": repr(ap.micro_active.zeta_mu_a),
                          "cutoff_hz": repr(ap.micro_active.omega_c_mu_a / HZ)}
    m = ap.mech
    cp["mechanical"] = {
        "hinge_stiffness_n_per_mm": repr(m.k_mu / N_PER_MM), "passive_mass_kg": repr(m.m_mu_p),
        "payload_kg": repr(m.m_load), "hinge_damping_ns_per_m": repr(m.c_mu),
        "hinge_damping_ratio": repr(m.hinge_damping_ratio),
        "rom_mm": repr(m.rom / MM), "v_max_mm_s": repr(m.v_max / MM)}
    cp["environment"] = {"stiffness_n_per_mm": repr(ap.env.k_env / N_PER_MM), "wall_mm": repr(ap.env.x_wall / MM)}
    cp["weights"] = {
        "crossover_f_hz": repr(w.omega_co_F / HZ), "K_lf_F": repr(w.K_lf_F), "K_hf_F": repr(w.K_hf_F),
        "K_lf_x": repr(w.K_lf_x), "K_hf_x": repr(w.K_hf_x), "crossover_x_hz": repr(w.omega_co_x / HZ),
        "K_vdot": repr(w.K_vdot), "force_norm_n": repr(w.F_des_norm), "rom_mm": repr(w.x_rom / MM),
        "v_max_mm_s": repr(w.v_max / MM), "disturbance_scale": repr(w.disturbance_scale),
        "max_overshoot": "none" if w.max_overshoot is None else repr(w.max_overshoot)}
    cp["simulation"] = {
        "sample_time_s": repr(s.Ts), "duration_s": repr(s.duration), "x_dist_mm": repr(s.x_dist / MM),
        "noise_std_n": repr(s.noise_std), "seed": str(s.seed), "v_max_macro_mm_s": repr(s.v_max_macro / MM)}
    for kind, g in sorted(cfg.gains.items(), key=lambda kv: kv[0].value):
        cp[f"gains.{kind.value}"] = _gains_to_section(g)
    return cp


def save_config(cfg: Config, path) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        to_parser(cfg).write(fh)
    return path
