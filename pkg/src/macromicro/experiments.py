"""Comparison experiments across the three architectures: closed-loop force
bandwidth, collision from a distance, and a blended force trajectory."""

from __future__ import annotations

import csv
import enum
import functools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from . import plant as pm
from .config import Config, default_config
from .controllers import Architecture, ClosedLoop, ControllerSet, force_tracking_ss, tune_lf
from .lti import freq_response
from .sim import MetricSet, Thresholds, extract_metrics, simulate
from .synthesis import SynthesisResult, crossover_search
from . import sysid

ALL_ARCHITECTURES = (Architecture.PROPOSED, Architecture.LEADER_FOLLOWER, Architecture.ROBOT_ONLY)


class ExperimentKind(str, enum.Enum):
    BANDWIDTH = "Bandwidth"
    COLLISION_INSIDE = "CollisionInside"
    COLLISION_OUTSIDE = "CollisionOutside"
    FORCE_TRAJECTORY = "ForceTrajectory"

    @classmethod
    def parse(cls, name: str) -> "ExperimentKind":
        key = name.replace("-", "").replace("_", "").lower()
        for k in cls:
            if k.value.lower() == key:
                return k
        raise ValueError(f"unknown experiment {name!r}")


COLLISION_GAP = {ExperimentKind.COLLISION_INSIDE: 2e-3, ExperimentKind.COLLISION_OUTSIDE: 10e-3}


@dataclass(frozen=True)
class ExperimentSpec:
    kind: ExperimentKind
    architectures: tuple = ALL_ARCHITECTURES
    axis: str = "X"
    repetitions: int = 1
    overrides: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "architectures", tuple(Architecture(a) for a in self.architectures))

    @property
    def x_dist(self) -> float:
        return float(self.overrides.get("x_dist", COLLISION_GAP.get(self.kind, 0.0)))

    def option(self, key: str, default):
        return type(default)(self.overrides.get(key, default))


# -- gains -------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def synthesized(ap: pm.AxisPlant, kind: Architecture, weights, seed: int = 0) -> SynthesisResult:
    if kind is Architecture.ROBOT_ONLY:
        weights = weights.with_(max_overshoot=None)
    return crossover_search(ap, weights, kind, seed=seed)


@functools.lru_cache(maxsize=None)
def tuned_lf(ap: pm.AxisPlant) -> ControllerSet:
    return tune_lf(ap)


def resolve_gains(cfg: Config, kinds, seed: int = 0) -> dict:
    """Gains per architecture: configured ones first, otherwise tuned here."""
    out = {}
    for k in kinds:
        if k in cfg.gains:
            out[k] = cfg.gains[k]
        elif k is Architecture.LEADER_FOLLOWER:
            out[k] = tuned_lf(cfg.plant)
        else:
            out[k] = synthesized(cfg.plant, k, cfg.weights, seed).gains
    return out


# -- trajectories --------------------------------------------------------------

def quintic_blend(F0: float, F1: float, T: float, t):
    """Minimum-jerk transition from ``F0`` to ``F1`` over ``T`` seconds."""
    if T <= 0:
        raise ValueError("blend duration must be positive")
    tau = np.clip(np.asarray(t, dtype=float) / T, 0.0, 1.0)
    return F0 + (F1 - F0) * (10 * tau ** 3 - 15 * tau ** 4 + 6 * tau ** 5)


def switching_profile(levels=(10.0, 20.0), blend: float = 0.2, hold: float = 1.5,
                      cycles: int = 2, start: float = 0.0):
    """Piecewise trajectory alternating between two force levels with quintic blends."""
    lo, hi = levels
    segments = []
    t0 = start + hold
    for _ in range(cycles):
        segments.append((t0, lo, hi))
        t0 += blend + hold
        segments.append((t0, hi, lo))
        t0 += blend + hold
    end = t0

    def f(t):
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, lo)
        for ts, a, b in segments:
            m = t >= ts
            out[m] = quintic_blend(a, b, blend, t[m] - ts)
        return out

    return f, end


# -- results -------------------------------------------------------------------

@dataclass(frozen=True)
class MetricRow:
    experiment: str
    metric: str
    unit: str
    values: Mapping  # architecture short name -> float | None
    higher_is_better: bool = False


@dataclass
class ComparisonTable:
    """Metric rows with improvements recomputed from the raw values on demand."""

    rows: list = field(default_factory=list)

    def add(self, experiment, metric, unit, values, higher_is_better=False):
        self.rows.append(MetricRow(experiment, metric, unit, dict(values), higher_is_better))

    def value(self, experiment: str, metric: str, arch: str):
        for r in self.rows:
            if r.experiment == experiment and r.metric == metric:
                return r.values.get(arch)
        raise KeyError((experiment, metric))

    @staticmethod
    def improvement(row: MetricRow, baseline: str, ours: str = "Ours") -> float | None:
        a, b = row.values.get(ours), row.values.get(baseline)
        if a is None or b is None or b == 0:
            return None
        return (a - b) / b if row.higher_is_better else (b - a) / b

    def extend(self, other: "ComparisonTable") -> "ComparisonTable":
        self.rows.extend(other.rows)
        return self


CSV_HEADER = ["experiment", "metric", "unit", "Ours", "LF", "RB", "improvement_vs_LF", "improvement_vs_RB"]


def _fmt(v) -> str:
    if v is None:
        return "not reached"
    return f"{v:.6g}"


def write_comparison_csv(tables, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for table in tables:
            for r in table.rows:
                imp = [ComparisonTable.improvement(r, b) for b in ("LF", "RB")]
                w.writerow([r.experiment, r.metric, r.unit]
                           + [_fmt(r.values.get(a)) if a in r.values else "" for a in ("Ours", "LF", "RB")]
                           + ["" if v is None else f"{v:.6g}" for v in imp])
    return path


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    table: ComparisonTable
    traces: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)  # short name -> MetricSet or dict
    frfs: dict = field(default_factory=dict)  # short name -> (FrequencyResponse, TransferFunction)
    gains: dict = field(default_factory=dict)


def _prepare(spec: ExperimentSpec, cfg: Config | None, gains: dict | None, seed: int):
    cfg = cfg or default_config(spec.axis)
    if cfg.plant.axis_label != spec.axis.upper():
        cfg = cfg.with_axis(spec.axis)
    g = dict(gains or {})
    missing = [k for k in spec.architectures if k not in g]
    g.update(resolve_gains(cfg, missing, seed))
    return cfg, g


def _metric_mean(ms: list[MetricSet]) -> MetricSet:
    if len(ms) == 1:
        return ms[0]
    vals = {}
    for name in ms[0].as_dict():
        xs = [getattr(m, name) for m in ms]
        vals[name] = None if any(x is None for x in xs) else float(np.mean(xs))
    return MetricSet(**vals)


def _repeat(spec, cfg, cl, f_des, duration, position, t_from=0.0):
    traces, metrics = [], []
    for rep in range(spec.repetitions):
        sc = replace(cfg.sim, duration=duration, x_dist=spec.x_dist,
                     noise_std=spec.option("noise_std", cfg.sim.noise_std), seed=cfg.sim.seed + rep)
        tr = simulate(cl, sc, f_des)
        if t_from > 0:
            tr = tr.window(t_from)
        traces.append(tr)
        metrics.append(extract_metrics(tr, thresholds=Thresholds(rom=cfg.plant.mech.rom), position=position))
    return traces[0], _metric_mean(metrics)


def run_collision(spec: ExperimentSpec, cfg: Config | None = None, gains: dict | None = None,
                  seed: int = 0, F_des: float = 20.0) -> ExperimentResult:
    """Force step commanded while the tool is ``x_dist`` in front of the object."""
    if spec.kind not in COLLISION_GAP:
        raise ValueError("run_collision needs a collision experiment")
    cfg, g = _prepare(spec, cfg, gains, seed)
    default_T = 10.0 if spec.kind is ExperimentKind.COLLISION_INSIDE else 20.0
    duration = spec.option("duration", default_T)
    res = ExperimentResult(spec, ComparisonTable(), gains=g)
    for k in spec.architectures:
        position = k is not Architecture.ROBOT_ONLY
        tr, m = _repeat(spec, cfg, ClosedLoop(cfg.plant, k, g[k]), F_des, duration, position)
        res.traces[f"{spec.kind.value}_{k.short}"] = tr
        res.metrics[k.short] = m
    name = spec.kind.value
    rows = [("t_contact", "Contact established", "s"), ("t_force_reached", "Desired force reached", "s"),
            ("t_pos_reached", "Des. position reached", "s"), ("rmse_force", "RMSE force", "N"),
            ("max_force_err", "Maximum force error", "N"), ("overshoot", "Force overshoot", "-")]
    for attr, label, unit in rows:
        vals = {}
        for a, m in res.metrics.items():
            if attr == "t_pos_reached" and a == Architecture.ROBOT_ONLY.short:
                continue
            vals[a] = getattr(m, attr)
        res.table.add(name, label, unit, vals)
    return res


def run_force_trajectory(spec: ExperimentSpec, cfg: Config | None = None, gains: dict | None = None,
                         seed: int = 0) -> ExperimentResult:
    """Alternate between 10 N and 20 N with quintic blends after settling at 10 N."""
    if spec.kind is not ExperimentKind.FORCE_TRAJECTORY:
        raise ValueError("run_force_trajectory needs a force-trajectory experiment")
    cfg, g = _prepare(spec, cfg, gains, seed)
    settle = spec.option("settle", 6.0)
    blend = spec.option("blend_time", 0.2)
    f, end = switching_profile((10.0, 20.0), blend=blend, hold=spec.option("hold", 1.5),
                               cycles=int(spec.option("cycles", 2)), start=settle)
    res = ExperimentResult(spec, ComparisonTable(), gains=g)
    for k in spec.architectures:
        position = k is not Architecture.ROBOT_ONLY
        tr, m = _repeat(spec, cfg, ClosedLoop(cfg.plant, k, g[k]), f, end + 0.5, position, t_from=settle)
        res.traces[f"{spec.kind.value}_{k.short}"] = tr
        res.metrics[k.short] = m
    name = spec.kind.value
    res.table.add(name, "Maximum force error", "N", {a: m.max_force_err for a, m in res.metrics.items()})
    res.table.add(name, "RMSE force", "N", {a: m.rmse_force for a, m in res.metrics.items()})
    res.table.add(name, "RMSE position", "m", {a: m.rmse_pos for a, m in res.metrics.items()
                                              if a != Architecture.ROBOT_ONLY.short})
    return res


def linear_cutoff(ap: pm.AxisPlant, kind: Architecture, gains: ControllerSet) -> float:
    """-3 dB frequency (Hz) of the linear in-contact force loop."""
    ss = force_tracking_ss(ClosedLoop(ap, kind, gains))
    w = np.geomspace(1e-3, 1e4, 20000)
    mag = freq_response(ss, w).magnitude()
    dc = abs(freq_response(ss, [1e-5]).siso()[0])
    below = np.flatnonzero(mag < dc / math.sqrt(2))
    if below.size == 0:
        raise ValueError("linear loop never drops below -3 dB")
    return float(w[below[0]] / (2 * math.pi))


def run_bandwidth(spec: ExperimentSpec, cfg: Config | None = None, gains: dict | None = None,
                  seed: int = 0) -> ExperimentResult:
    """Offset force sweep in contact; reduced-order fit and its -3 dB cutoff per architecture."""
    if spec.kind is not ExperimentKind.BANDWIDTH:
        raise ValueError("run_bandwidth needs a bandwidth experiment")
    cfg, g = _prepare(spec, cfg, gains, seed)
    fs = 1.0 / cfg.sim.Ts
    sweep = sysid.SweepSpec(spec.option("f_start", 0.1), spec.option("f_end", 50.0),
                            spec.option("amplitude", 5.0), spec.option("offset", 15.0),
                            duration=spec.option("sweep_duration", 60.0), sample_rate=fs)
    settle = spec.option("settle", 5.0)
    tail = spec.option("tail", 2.0)
    exc = sysid.gen_sweep(sweep)

    def f_des(t):
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, sweep.offset)
        i = np.round((t - settle) * fs).astype(int)
        m = (i >= 0) & (i < len(exc.u))
        out[m] = exc.u[i[m]]
        return out

    lo, hi = sweep.f_start * 1.5, sweep.f_end * 0.8
    grid = np.geomspace(lo, hi, int(spec.option("grid_points", 80)))
    res = ExperimentResult(spec, ComparisonTable(), gains=g)
    rows = {}
    for k in spec.architectures:
        cl = ClosedLoop(cfg.plant, k, g[k])
        tr = simulate(cl, replace(cfg.sim, duration=settle + sweep.duration + tail, x_dist=0.0), f_des)
        part = tr.window(settle)
        data = sysid.TimeSeries(part.t - part.t[0], part.F_des, part.F_act)
        frf = sysid.estimate_frf(data, grid, n_segments=1, window="boxcar")
        fits = {o: sysid.fit_reduced_order(frf, o) for o in (1, 2, 3)}
        for o, fr in list(fits.items()):
            y_hat = sysid.lsim(fr.model, data)
            fits[o] = replace(fr, fit_percent=sysid.model_fit_percent(data.y, y_hat),
                              mse=float(np.mean((data.y - y_hat) ** 2)))
        order = max(fits, key=lambda o: fits[o].fit_percent)
        best = fits[order]
        cut = sysid.cutoff_minus3db(best.model)
        res.traces[f"{spec.kind.value}_{k.short}"] = part
        res.frfs[k.short] = (frf, best.model)
        rows[k.short] = dict(cutoff=cut, linear=linear_cutoff(cfg.plant, k, g[k]), order=order,
                             fit=best.fit_percent, result=best)
    res.metrics = rows
    name = spec.kind.value
    res.table.add(name, "-3 dB cutoff frequency", "Hz", {a: r["cutoff"] for a, r in rows.items()},
                  higher_is_better=True)
    res.table.add(name, "Linear-model cutoff frequency", "Hz", {a: r["linear"] for a, r in rows.items()},
                  higher_is_better=True)
    res.table.add(name, "Reduced model order", "-", {a: float(r["order"]) for a, r in rows.items()},
                  higher_is_better=True)
    res.table.add(name, "Model fit", "%", {a: r["fit"] for a, r in rows.items()}, higher_is_better=True)
    return res


RUNNERS = {
    ExperimentKind.BANDWIDTH: run_bandwidth,
    ExperimentKind.COLLISION_INSIDE: run_collision,
    ExperimentKind.COLLISION_OUTSIDE: run_collision,
    ExperimentKind.FORCE_TRAJECTORY: run_force_trajectory,
}


def run_experiment(spec: ExperimentSpec, cfg: Config | None = None, gains: dict | None = None,
                   seed: int = 0) -> ExperimentResult:
    return RUNNERS[spec.kind](spec, cfg, gains, seed)


# -- report ----------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "macromicro"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


COLORS = {"Ours": "tab:blue", "LF": "tab:orange", "RB": "tab:green"}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt

    plt.close(fig)
    return path


def plot_bode(frfs: Mapping, path) -> Path:
    """Measured magnitude/phase per architecture with the fitted model overlaid."""
    plt = _pyplot()
    fig, (ax_m, ax_p) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.6))
    for name, (frf, model) in frfs.items():
        f = frf.frequencies / (2 * math.pi)
        c = COLORS.get(name)
        ax_m.semilogx(f, 20 * np.log10(frf.magnitude()), color=c, label=name, gid=f"bode-mag-{name}")
        ax_p.semilogx(f, np.unwrap(np.angle(frf.siso())) * 180 / math.pi, color=c, gid=f"bode-phase-{name}")
        if model is not None:
            Hm = model.freq_response(frf.frequencies)
            ax_m.semilogx(f, 20 * np.log10(np.abs(Hm)), color=c, ls="--", lw=0.8)
    ax_m.axhline(-3, color="0.6", lw=0.6, ls=":")
    ax_m.set_ylabel("magnitude [dB]")
    ax_p.set_ylabel("phase [deg]")
    ax_p.set_xlabel("frequency [Hz]")
    ax_m.legend(loc="lower left")
    ax_m.grid(True, which="both", lw=0.3)
    ax_p.grid(True, which="both", lw=0.3)
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_traces(traces: Mapping, path, signal: str = "force") -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ref_drawn = False
    for name, tr in traces.items():
        arch = name.rsplit("_", 1)[-1]
        c = COLORS.get(arch)
        if signal == "force":
            if not ref_drawn:
                ax.plot(tr.t, tr.F_des, color="k", lw=0.8, ls="--", label="F_des")
                ref_drawn = True
            ax.plot(tr.t, tr.F_act, color=c, label=arch, gid=f"trace-{arch}")
        else:
            if arch == Architecture.ROBOT_ONLY.short:
                continue
            ax.plot(tr.t, tr.x_tilde_mu_p * 1e3, color=c, label=arch, gid=f"trace-{arch}")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("force [N]" if signal == "force" else "passive deflection [mm]")
    ax.grid(True, lw=0.3)
    ax.legend(loc="best")
    fig.tight_layout()
    return _save(fig, Path(path))


def emit_report(tables, traces: Mapping, frfs: Mapping, out_dir) -> list[Path]:
    """Write the comparison CSV, one CSV per trace and SVG plots into ``out_dir``.

    ``traces`` maps ``"<experiment>_<arch>"`` to a trace; ``frfs`` maps an
    experiment name to ``{arch: (FrequencyResponse, model)}``.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory not writable: {out}") from exc
    written = [write_comparison_csv(tables, out / "comparison.csv")]
    groups: dict[str, dict] = {}
    for name in sorted(traces):
        written.append(traces[name].to_csv(out / f"trace_{name}.csv"))
        groups.setdefault(name.rsplit("_", 1)[0], {})[name] = traces[name]
    for exp, group in sorted(groups.items()):
        written.append(plot_traces(group, out / f"{exp}_force.svg", "force"))
        if any(not n.endswith("_" + Architecture.ROBOT_ONLY.short) for n in group):
            written.append(plot_traces(group, out / f"{exp}_position.svg", "position"))
    for exp in sorted(frfs):
        written.append(plot_bode(frfs[exp], out / f"{exp}_bode.svg"))
    return written
