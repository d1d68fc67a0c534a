import math

import pytest

from macromicro import cli
from macromicro.config import ConfigError, default_config, load_config, save_config
from macromicro.controllers import Architecture, ControllerSet
from dataclasses import replace


def test_round_trip(tmp_path):
    cfg = default_config("Y")
    cfg = replace(cfg, gains={Architecture.ROBOT_ONLY: ControllerSet(c_ctrl_F_M=1.5e4)})
    back = load_config(save_config(cfg, tmp_path / "c.ini"))
    assert back.plant == cfg.plant
    assert back.weights == cfg.weights
    assert back.sim == cfg.sim
    assert back.gains == cfg.gains


def test_units_converted(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[plant]\naxis = x\n[macro]\ncutoff_hz = 4.0\n[mechanical]\nhinge_stiffness_n_per_mm = 20\n"
                 "rom_mm = 3\n[environment]\nstiffness_n_per_mm = 50\n[weights]\ncrossover_f_hz = 2\n"
                 "max_overshoot = none\n[simulation]\nx_dist_mm = 2\nsample_time_s = 0.0005\n")
    cfg = load_config(p)
    assert cfg.plant.macro.omega_cM == pytest.approx(8 * math.pi)
    assert cfg.plant.mech.k_mu == pytest.approx(20e3)
    assert cfg.plant.mech.rom == pytest.approx(3e-3)
    assert cfg.plant.env.k_env == pytest.approx(50e3)
    assert cfg.weights.omega_co_F == pytest.approx(4 * math.pi)
    assert cfg.weights.max_overshoot is None
    assert cfg.sim.x_dist == pytest.approx(2e-3) and cfg.sim.Ts == 5e-4


@pytest.mark.parametrize("text", ["[macro]\ngain = abc\n", "[plant]\naxis = Q\n",
                                  "[mechanical]\nhinge_stiffness_n_per_mm = -1\n",
                                  "[gains.Proposed]\nc_ctrl_F_M = 0\n"])
def test_invalid_config(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


def test_missing_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_cli_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main([])
    assert e.value.code == cli.EXIT_USAGE
    assert cli.main(["tune-lf", "--config", str(tmp_path / "missing.ini")]) == cli.EXIT_USAGE
    assert cli.main(["experiment", "assembly", "--out", str(tmp_path)]) == cli.EXIT_USAGE
    assert cli.main(["synthesize", "--architecture", "LF", "--out", str(tmp_path)]) == cli.EXIT_USAGE


def test_cli_simulate_with_config_gains(tmp_path, capsys):
    cfg = replace(default_config(), gains={Architecture.ROBOT_ONLY: ControllerSet(c_ctrl_F_M=16000.0)})
    p = save_config(cfg, tmp_path / "c.ini")
    rc = cli.main(["simulate", "--config", str(p), "--architecture", "RB", "--x-dist", "2",
                   "--duration", "3", "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_OK
    assert (tmp_path / "o" / "simulate_RB.csv").is_file()
    assert "t_contact" in capsys.readouterr().out


def test_cli_numerical_failure(tmp_path):
    cfg = replace(default_config(), gains={Architecture.LEADER_FOLLOWER: ControllerSet(c_ctrl_F_mu=1e-6)})
    p = save_config(cfg, tmp_path / "c.ini")
    cfg_sim = tmp_path / "c2.ini"
    cfg_sim.write_text(p.read_text().replace("v_max_mm_s = 100.0", "v_max_mm_s = 1e12"))
    rc = cli.main(["simulate", "--config", str(cfg_sim), "--architecture", "LF", "--duration", "10",
                   "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_NUMERIC


def test_cli_identify(tmp_path, capsys):
    assert cli.main(["identify", "--target", "micro", "--out", str(tmp_path)]) == cli.EXIT_OK
    out = capsys.readouterr().out
    zeta = float([line for line in out.splitlines() if line.startswith("zeta")][0].split("=")[1])
    assert zeta == pytest.approx(0.45, rel=1e-3)
