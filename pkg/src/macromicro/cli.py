"""Command-line entry point: ``macromicro <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import plant as pm
from . import sysid
from .config import Config, ConfigError, default_config, load_config, save_config
from .controllers import Architecture, ClosedLoop, TuningError, tune_lf
from .lti import LTIError
from .sim import SimulationError, Thresholds, extract_metrics, simulate
from .synthesis import SynthesisError, crossover_search, write_synthesis_report

log = logging.getLogger("macromicro")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI configuration file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--axis", type=str.upper, choices=["X", "Y", "Z"], help="robot axis")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="macromicro", description="Macro-micro force control in simulation.",
                parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("identify", parents=[common], help="sweep identification round trip")
    s.add_argument("--target", choices=["macro", "micro"], default="macro")
    s.add_argument("--noise", type=float, default=0.0, help="output noise std relative to output std")
    s.add_argument("--sample-rate", type=float, default=10_000.0)

    s = sub.add_parser("synthesize", parents=[common], help="tune gains by crossover search")
    s.add_argument("--architecture", default="Proposed", help="Proposed or RobotOnly")

    sub.add_parser("tune-lf", parents=[common], help="tune the leader-follower baseline")

    s = sub.add_parser("simulate", parents=[common], help="simulate one force-step scenario")
    s.add_argument("--architecture", default="Proposed")
    s.add_argument("--force", type=float, default=20.0, help="desired force [N]")
    s.add_argument("--x-dist", type=float, help="initial distance to the object [mm]")
    s.add_argument("--duration", type=float, help="[s]")

    s = sub.add_parser("experiment", parents=[common], help="run one comparison experiment")
    s.add_argument("kind", help="bandwidth, collision-inside, collision-outside, force-trajectory")
    s.add_argument("--architectures", default="Proposed,LeaderFollower,RobotOnly")
    s.add_argument("--repetitions", type=int, default=1)
    s.add_argument("--blend-time", type=float, help="force-trajectory blend duration [s]")

    s = sub.add_parser("report", parents=[common], help="run every experiment and write the report")
    s.add_argument("--skip", default="", help="comma-separated experiment kinds to omit")
    return p


def _config(args) -> Config:
    cfg = load_config(args.config, args.axis) if args.config else default_config(args.axis or "X")
    if args.axis and cfg.plant.axis_label != args.axis:
        cfg = cfg.with_axis(args.axis)
    return cfg


def _arch(name: str) -> Architecture:
    try:
        return Architecture.parse(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _outdir(args) -> Path:
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def cmd_identify(args, cfg: Config) -> int:
    ap = cfg.plant
    true = pm.macro_tf(ap.macro) if args.target == "macro" else pm.micro_active_tf(ap.micro_active)
    spec = sysid.SweepSpec(0.1, 200.0, 1e-3, duration=20.0, sample_rate=args.sample_rate)
    data = sysid.gen_sweep(spec)
    y = sysid.lsim(true, data)
    if args.noise > 0:
        y = y + np.random.default_rng(args.seed).normal(0.0, args.noise * np.std(y), y.shape)
    data = data.with_output(y)
    grid = np.geomspace(0.2, 150.0, 120)
    frf = sysid.estimate_frf(data, grid, n_segments=1, window="boxcar")
    fit = sysid.fit_second_order(frf, validation=data)
    out = _outdir(args)
    data.to_csv(out / f"identify_{args.target}.csv")
    for k, v in fit.as_row().items():
        print(f"{k} = {v}")
    return EXIT_OK


def cmd_synthesize(args, cfg: Config) -> int:
    kind = _arch(args.architecture)
    if kind is Architecture.LEADER_FOLLOWER:
        raise UsageError("the leader-follower baseline is tuned with tune-lf")
    weights = cfg.weights if kind is Architecture.PROPOSED else cfg.weights.with_(max_overshoot=None)
    res = crossover_search(cfg.plant, weights, kind, seed=args.seed)
    out = _outdir(args)
    write_synthesis_report(res, out / f"synthesis_{kind.short}.ini")
    save_config(replace(cfg, gains={**cfg.gains, kind: res.gains}), out / "tuned.ini")
    print(f"{kind.value}: omega_co_F = {res.omega_co_F_final / (2 * np.pi):.4g} Hz, "
          f"||T|| = {res.achieved_norm:.4f}, overshoot = {100 * res.overshoot:.3g} %")
    for k, v in res.gains.as_dict().items():
        print(f"  {k} = {v:.6g}")
    return EXIT_OK


def cmd_tune_lf(args, cfg: Config) -> int:
    g = tune_lf(cfg.plant)
    out = _outdir(args)
    save_config(replace(cfg, gains={**cfg.gains, Architecture.LEADER_FOLLOWER: g}), out / "tuned.ini")
    for k, v in g.as_dict().items():
        print(f"{k} = {v:.6g}")
    return EXIT_OK


def cmd_simulate(args, cfg: Config) -> int:
    kind = _arch(args.architecture)
    g = ex.resolve_gains(cfg, [kind], args.seed)[kind]
    sc = cfg.sim
    if args.x_dist is not None:
        sc = replace(sc, x_dist=args.x_dist * 1e-3)
    if args.duration is not None:
        sc = replace(sc, duration=args.duration)
    sc = replace(sc, seed=args.seed)
    tr = simulate(ClosedLoop(cfg.plant, kind, g), sc, args.force)
    out = _outdir(args)
    tr.to_csv(out / f"simulate_{kind.short}.csv")
    m = extract_metrics(tr, thresholds=Thresholds(rom=cfg.plant.mech.rom),
                        position=kind is not Architecture.ROBOT_ONLY)
    for k, v in m.as_dict().items():
        print(f"{k} = {'not reached' if v is None else f'{v:.6g}'}")
    return EXIT_OK


def _spec(kind: str, args, cfg: Config, architectures=None) -> ex.ExperimentSpec:
    try:
        k = ex.ExperimentKind.parse(kind)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    archs = architectures or tuple(_arch(a) for a in args.architectures.split(",") if a)
    overrides = {}
    if getattr(args, "blend_time", None) is not None:
        overrides["blend_time"] = args.blend_time
    return ex.ExperimentSpec(k, archs, cfg.plant.axis_label, getattr(args, "repetitions", 1), overrides)


def _emit(results, out: Path) -> None:
    traces, frfs = {}, {}
    for r in results:
        traces.update(r.traces)
        if r.frfs:
            frfs[r.spec.kind.value] = r.frfs
    for p in ex.emit_report([r.table for r in results], traces, frfs, out):
        log.info("wrote %s", p)


def _print_table(results) -> None:
    for r in results:
        for row in r.table.rows:
            vals = "  ".join(f"{a}={'-' if v is None else f'{v:.4g}'}" for a, v in row.values.items())
            print(f"{row.experiment:17s} {row.metric:30s} [{row.unit}]  {vals}")


def cmd_experiment(args, cfg: Config) -> int:
    spec = _spec(args.kind, args, cfg)
    res = ex.run_experiment(spec, cfg, seed=args.seed)
    _emit([res], _outdir(args))
    _print_table([res])
    return EXIT_OK


def cmd_report(args, cfg: Config) -> int:
    skip = {ex.ExperimentKind.parse(s) for s in args.skip.split(",") if s}
    results = []
    for kind in ex.ExperimentKind:
        if kind in skip:
            continue
        spec = ex.ExperimentSpec(kind, ex.ALL_ARCHITECTURES, cfg.plant.axis_label)
        results.append(ex.run_experiment(spec, cfg, seed=args.seed))
    _emit(results, _outdir(args))
    _print_table(results)
    return EXIT_OK


COMMANDS = {
    "identify": cmd_identify,
    "synthesize": cmd_synthesize,
    "tune-lf": cmd_tune_lf,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"macromicro: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SynthesisError, SimulationError, TuningError, LTIError, sysid.IdentificationError) as exc:
        print(f"macromicro: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"macromicro: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
