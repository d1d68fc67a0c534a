import numpy as np
import pytest

from macromicro import plant as pm
from macromicro.controllers import Architecture, ClosedLoop, ControllerSet
from macromicro.sim import (MetricSet, SimConfig, SimTrace, Thresholds,
                            extract_metrics, simulate)

AP = pm.default_plant("X")
OURS = ControllerSet(c_ctrl_F_M=5000.0, c_ctrl_F_mu=3000.0, k_ctrl_x=2.0, c_ctrl_x=1e-3)
RB = ControllerSet(c_ctrl_F_M=16000.0)


def _trace(t, F_des, F_act, xp=None):
    n = len(t)
    z = np.zeros(n)
    xp = z if xp is None else xp
    return SimTrace(t, F_des, F_act, F_act, z, z, xp, z, z, z, F_act > 0)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(Ts=0.0)
    with pytest.raises(ValueError):
        SimConfig(x_dist=-1.0)


def test_zero_force_stays_at_rest():
    tr = simulate(ClosedLoop(AP, Architecture.PROPOSED, OURS), SimConfig(duration=1.0, x_dist=2e-3), 0.0)
    assert not tr.contact.any()
    assert np.all(tr.F_act == 0.0)
    assert np.allclose(tr.x_M, -2e-3)


def test_contact_reached_and_settles():
    tr = simulate(ClosedLoop(AP, Architecture.PROPOSED, OURS), SimConfig(duration=8.0, x_dist=2e-3), 20.0)
    assert tr.contact[-1]
    assert tr.F_act[-1] == pytest.approx(20.0, abs=0.2)


def test_robot_only_slower_contact():
    cfg = SimConfig(duration=10.0, x_dist=10e-3)
    m_ours = extract_metrics(simulate(ClosedLoop(AP, Architecture.PROPOSED, OURS), cfg, 20.0))
    m_rb = extract_metrics(simulate(ClosedLoop(AP, Architecture.ROBOT_ONLY, RB), cfg, 20.0), position=False)
    assert m_rb.t_contact > m_ours.t_contact


def test_macro_velocity_saturation():
    cfg = SimConfig(duration=0.5, x_dist=50e-3, v_max_macro=0.05)
    tr = simulate(ClosedLoop(AP, Architecture.ROBOT_ONLY, ControllerSet(c_ctrl_F_M=10.0)), cfg, 20.0)
    assert np.max(np.abs(tr.v_cmd_M)) <= 0.05 + 1e-15


def test_micro_stroke_limited():
    cfg = SimConfig(duration=1.0, x_dist=10e-3)
    tr = simulate(ClosedLoop(AP, Architecture.PROPOSED, OURS), cfg, 20.0)
    assert np.max(np.abs(tr.x_tilde_mu_a)) <= AP.mech.rom + 1e-12
    assert np.max(np.abs(tr.v_cmd_mu)) <= AP.mech.v_max + 1e-15


def test_noise_reproducible():
    cfg = SimConfig(duration=0.5, noise_std=0.1, seed=3)
    cl = ClosedLoop(AP, Architecture.PROPOSED, OURS)
    a, b = simulate(cl, cfg, 20.0), simulate(cl, cfg, 20.0)
    assert np.array_equal(a.F_meas, b.F_meas)
    c = simulate(cl, SimConfig(duration=0.5, noise_std=0.1, seed=4), 20.0)
    assert not np.array_equal(a.F_meas, c.F_meas)


def test_trace_csv_columns(tmp_path):
    tr = simulate(ClosedLoop(AP, Architecture.ROBOT_ONLY, RB), SimConfig(duration=0.01), 20.0)
    p = tr.to_csv(tmp_path / "t.csv")
    lines = p.read_text().splitlines()
    assert lines[0].split(",") == tr.columns()
    assert len(lines) == len(tr) + 1


def test_window():
    tr = simulate(ClosedLoop(AP, Architecture.ROBOT_ONLY, RB), SimConfig(duration=1.0), 20.0)
    w = tr.window(0.5)
    assert w.t[0] == pytest.approx(0.5) and len(w) == 501


def test_perfect_step_metrics():
    t = np.arange(0, 3.0001, 1e-3)
    F_act = np.where(t >= 1.0 - 1e-12, 20.0, 0.0)
    m = extract_metrics(_trace(t, np.full_like(t, 20.0), F_act))
    assert m.t_contact == pytest.approx(1.0)
    assert m.t_force_reached == pytest.approx(1.0)
    assert m.t_pos_reached == pytest.approx(1.0)
    assert m.max_force_err == pytest.approx(20.0)
    assert m.overshoot == 0.0


def test_overshoot_metric():
    t = np.arange(0, 2.0001, 1e-3)
    F_act = 20.0 * (1 - np.exp(-t / 0.05)) + 2.0 * np.exp(-((t - 0.5) / 0.05) ** 2)
    m = extract_metrics(_trace(t, np.full_like(t, 20.0), F_act))
    assert m.overshoot == pytest.approx(0.10, abs=2e-3)


def test_unreached_conditions_are_none():
    t = np.arange(0, 1.0001, 1e-3)
    m = extract_metrics(_trace(t, np.full_like(t, 20.0), np.zeros_like(t)))
    assert m.t_contact is None and m.t_force_reached is None and m.t_pos_reached is None
    assert isinstance(m, MetricSet)


def test_position_metric_optional():
    t = np.arange(0, 1.0001, 1e-3)
    m = extract_metrics(_trace(t, np.full_like(t, 20.0), np.full_like(t, 20.0), np.full_like(t, 1e-3)),
                        position=False)
    assert m.t_pos_reached is None
    with pytest.raises(ValueError):
        extract_metrics(_trace(t[:0], t[:0], t[:0]))


def test_dwell_requirement():
    t = np.arange(0, 1.0001, 1e-3)
    F = np.full_like(t, 20.0)
    F[(t > 0.05) & (t < 0.055)] = 10.0
    m = extract_metrics(_trace(t, np.full_like(t, 20.0), F), thresholds=Thresholds(force_dwell=0.1))
    assert m.t_force_reached == pytest.approx(0.055)
