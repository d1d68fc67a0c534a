"""Property-based checks of invariants across modules."""

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from macromicro import experiments as ex
from macromicro import plant as pm
from macromicro.controllers import (Architecture, ClosedLoop, ControllerSet, build_closed_loop,
                                    macro_force_law, micro_force_law, micro_position_law_tf)
from macromicro.lti import (StateSpace, TransferFunction, connect, discretize, freq_response,
                            hinf_norm, tf_to_ss)
from macromicro.sim import SimTrace, extract_metrics

FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

pos = st.floats(min_value=0.1, max_value=100.0)


@st.composite
def stable_tf(draw, max_order=3):
    n = draw(st.integers(1, max_order))
    poles = [-draw(pos) for _ in range(n)]
    den = np.real(np.poly(poles))
    coef = st.one_of(st.just(0.0), st.floats(1e-6, 10), st.floats(-10, -1e-6))
    num = [draw(coef) for _ in range(draw(st.integers(1, n)))]
    if not np.any(num):
        num = [1.0]
    return TransferFunction(num, den)


@FAST
@given(stable_tf(), stable_tf())
def test_series_is_product(a, b):
    w = np.geomspace(0.01, 1e3, 30)
    s = connect(tf_to_ss(a), tf_to_ss(b), "series")
    assert np.allclose(freq_response(s, w).siso(), a.freq_response(w) * b.freq_response(w),
                       rtol=1e-8, atol=1e-12)


@FAST
@given(stable_tf())
def test_hinf_bounds_grid(tf):
    ss = tf_to_ss(tf)
    n = hinf_norm(ss)
    grid = np.abs(tf.freq_response(np.geomspace(1e-3, 1e4, 2000))).max()
    assert n >= grid * (1 - 1e-6)
    assert n >= abs(tf.dc_gain()) * (1 - 1e-6)


@FAST
@given(stable_tf(), st.floats(1e-4, 1e-2))
def test_tustin_keeps_stability_and_dc(tf, Ts):
    d = discretize(tf_to_ss(tf), Ts)
    assert np.all(np.abs(d.poles()) < 1)
    dc = (d.C @ np.linalg.solve(np.eye(d.n_states) - d.A, d.B) + d.D)[0, 0]
    assert dc == pytest.approx(tf.dc_gain(), rel=1e-8, abs=1e-12)


@FAST
@given(st.floats(1e3, 1e5), st.floats(0, 1e5), st.sampled_from(["X", "Y", "Z"]))
def test_passive_dc_between_zero_and_one(k_mu, k_env, axis):
    g = pm.micro_passive_tf(pm.MechanicalParams(k_mu=k_mu), k_env).dc_gain()
    assert 0 < g <= 1
    assert g == pytest.approx(k_mu / (k_mu + k_env))


@FAST
@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(10, 1e5))
def test_force_laws_linear(e1, e2, c):
    g = ControllerSet(c_ctrl_F_M=c, c_ctrl_F_mu=c)
    for law in (macro_force_law, micro_force_law):
        assert law(e1 + e2, g) == pytest.approx(law(e1, g) + law(e2, g), abs=1e-12)
        assert math.copysign(1, law(e1, g)) == math.copysign(1, e1) or e1 == 0


@FAST
@given(st.floats(0, 100), st.floats(0, 1), st.floats(1e-4, 1e-1))
def test_position_law_limits(k, c, T):
    tf = micro_position_law_tf(ControllerSet(k_ctrl_x=k, c_ctrl_x=c, T_filter=T))
    assert tf.num[-1] / tf.den[-1] == pytest.approx(k)
    assert tf.num[0] / tf.den[0] == pytest.approx(k + c / T)


@FAST
@given(st.floats(1e3, 1e5), st.floats(5e2, 1e5), st.floats(0, 10), st.sampled_from(["X", "Y", "Z"]))
def test_proposed_stable_loops_track(cM, cmu, kx, axis):
    ap = pm.default_plant(axis)
    ss = build_closed_loop(ClosedLoop(ap, Architecture.PROPOSED,
                                      ControllerSet(c_ctrl_F_M=cM, c_ctrl_F_mu=cmu, k_ctrl_x=kx)))
    if ss.is_stable():
        dc = ss.dc_gain()
        assert dc[0, 0] == pytest.approx(1.0, abs=1e-7)
        assert abs(dc[1, 0]) < 1e-9


@FAST
@given(st.lists(st.floats(0, 50), min_size=5, max_size=50), st.floats(0.1, 40))
def test_metric_relations(F, F_des):
    F = np.array(F)
    t = np.arange(len(F)) * 1e-3
    z = np.zeros_like(t)
    tr = SimTrace(t, np.full_like(t, F_des), F, F, z, z, z, z, z, z, F > 0)
    m = extract_metrics(tr)
    assert m.rmse_force <= m.max_force_err + 1e-12
    assert m.overshoot >= 0
    if m.t_force_reached is not None:
        assert m.t_contact is not None and m.t_force_reached >= m.t_contact


@FAST
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 2.0),
       st.lists(st.floats(0, 1), min_size=2, max_size=20))
def test_quintic_blend_stays_between_levels(F0, F1, T, taus):
    vals = ex.quintic_blend(F0, F1, T, np.sort(np.array(taus)) * T)
    lo, hi = min(F0, F1), max(F0, F1)
    assert np.all(vals >= lo - 1e-9) and np.all(vals <= hi + 1e-9)
    d = np.diff(vals) * np.sign(F1 - F0)
    assert np.all(d >= -1e-9)


values = st.one_of(st.none(), st.floats(0.01, 100))


@FAST
@given(values, values, values, st.booleans())
def test_improvements_recompute_from_raw(o, lf, rb, higher):
    t = ex.ComparisonTable()
    t.add("E", "m", "-", {"Ours": o, "LF": lf, "RB": rb}, higher_is_better=higher)
    row = t.rows[0]
    for base, b in (("LF", lf), ("RB", rb)):
        imp = ex.ComparisonTable.improvement(row, base)
        if o is None or b is None:
            assert imp is None
        else:
            expect = (o - b) / b if higher else (b - o) / b
            assert imp == pytest.approx(expect)


def test_static_gain_hinf():
    assert hinf_norm(StateSpace.gain([[3.0, 4.0]])) == pytest.approx(5.0)
