import math

import numpy as np
import pytest

from macromicro import plant as pm
from macromicro.controllers import Architecture, ClosedLoop, ControllerSet, build_closed_loop
from macromicro.lti import freq_response, hinf_norm
from macromicro.synthesis import (WeightSpec, build_generalized_plant,
                                  step_overshoot, tune_fixed_structure, weight_wf, weight_wx,
                                  write_synthesis_report)

AP = pm.default_plant("X")
HZ = 2 * math.pi


def test_force_weight_shape():
    spec = WeightSpec()
    W = weight_wf(spec)
    assert W.dc_gain() == pytest.approx(100.0)
    assert W(1e9j).real == pytest.approx(10.0, rel=1e-6)
    w = spec.omega_co_F * np.array([0.99, 1.0, 1.01])
    m = np.abs(W.freq_response(w))
    assert 10 < m[1] < 100 and m[0] > m[1] > m[2]


def test_position_weight_shape():
    W = weight_wx(WeightSpec())
    assert W.dc_gain() == pytest.approx(1000.0)
    assert W(1e9j).real == pytest.approx(1.0, rel=1e-6)
    m = np.abs(W.freq_response(np.geomspace(1e-4, 1e6, 1000)))
    assert np.all(np.diff(m) <= 1e-12)


def test_weight_validation():
    with pytest.raises(ValueError):
        WeightSpec(K_lf_F=5.0, K_hf_F=10.0)
    with pytest.raises(ValueError):
        WeightSpec(omega_co_F=0.0)


def test_generalized_plant_dimensions():
    T = build_generalized_plant(AP, WeightSpec(), ControllerSet(c_ctrl_F_M=1e4, c_ctrl_F_mu=3e3))
    assert (T.n_outputs, T.n_inputs) == (3, 2)


def test_open_loop_force_channel():
    # no controller: the force error equals the reference, weighted by W_F at DC
    spec = WeightSpec()
    T = build_generalized_plant(AP, spec, ControllerSet())
    h = freq_response(T, [1e-6]).siso(0, 0)[0]
    assert abs(h) == pytest.approx(spec.K_lf_F * spec.input_unit / spec.F_des_norm, rel=1e-4)
    unit = spec.with_(input_unit=spec.F_des_norm)
    h = freq_response(build_generalized_plant(AP, unit, ControllerSet()), [1e-6]).siso(0, 0)[0]
    assert abs(h) == pytest.approx(spec.K_lf_F, rel=1e-4)


def test_step_overshoot_linear():
    g = ControllerSet(c_ctrl_F_M=16000.0)
    assert step_overshoot(AP, Architecture.ROBOT_ONLY, g) < 1e-3


def test_tuning_descends_from_detuned_start():
    spec = WeightSpec(omega_co_F=0.5 * HZ)
    init = ControllerSet(c_ctrl_F_M=2e5, c_ctrl_F_mu=3e4, k_ctrl_x=0.5, c_ctrl_x=1e-3)
    T0 = build_generalized_plant(AP, spec, init)
    assert build_closed_loop(ClosedLoop(AP, Architecture.PROPOSED, init)).is_stable()
    res = tune_fixed_structure(AP, spec, init, budget=300, restarts=1)
    assert res.achieved_norm < hinf_norm(T0, 1e-4)
    assert build_closed_loop(ClosedLoop(AP, Architecture.PROPOSED, res.gains)).is_stable()


def test_easy_problem_is_feasible():
    res = tune_fixed_structure(AP, WeightSpec(omega_co_F=0.01 * HZ), budget=300, restarts=1,
                               stop_below=1.0)
    assert res.achieved_norm < 1.0 and res.feasible


def test_robot_only_easy_problem():
    res = tune_fixed_structure(AP, WeightSpec(omega_co_F=0.01 * HZ, max_overshoot=None),
                               kind=Architecture.ROBOT_ONLY, budget=200, restarts=1)
    assert res.achieved_norm < 1.0
    assert res.gains.k_ctrl_x == 0.0 and math.isinf(res.gains.c_ctrl_F_mu)


def test_crossover_search_contract(tuned):
    res = tuned.result(Architecture.PROPOSED)
    assert res.achieved_norm < 1.0
    assert build_closed_loop(ClosedLoop(AP, Architecture.PROPOSED, res.gains)).is_stable()
    ws = [w for w, _ in res.trace]
    ns = [n for _, n in res.trace]
    assert res.omega_co_F_final in ws
    # any failing grid point lies above the accepted crossover
    failing = [w for w, n in res.trace if n >= 1.0]
    assert all(w > res.omega_co_F_final for w in failing)
    assert min(ns) < 1.0


def test_feasible_set_down_closed(tuned):
    res = tuned.result(Architecture.PROPOSED)
    feasible = sorted(w for w, n in res.trace if n < 1.0)
    infeasible = sorted(w for w, n in res.trace if n >= 1.0)
    if feasible and infeasible:
        assert max(feasible) < min(infeasible) or max(feasible) == res.omega_co_F_final


def test_robot_only_crossover_smaller(tuned):
    ours = tuned.result(Architecture.PROPOSED)
    rb = tuned.result(Architecture.ROBOT_ONLY)
    assert rb.achieved_norm < 1.0
    assert rb.omega_co_F_final < ours.omega_co_F_final


def test_synthesis_report(tmp_path, tuned):
    p = write_synthesis_report(tuned.result(Architecture.ROBOT_ONLY), tmp_path / "s.ini")
    text = p.read_text()
    assert "[gains]" in text and "achieved_norm" in text
