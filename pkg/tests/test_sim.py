import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvdg.errors import NeverSettles, NonFinite
from pvdg.plant import SpvdgParams, spvdg_derivatives, stored_energy_rate
from pvdg.pvmodel import KC200GT, Environment, iv_curve
from pvdg.scenarios import PRESETS
from pvdg.sim import (Schedule, SimConfig, SystemParams, Trace, power_balance, rk4_step,
                      run_scenario, settling_time)

# matrix exponential of the unforced six-state model (duties 0, d1 = d2 = 0, d3 = 1/8),
# 50 digits, from tests/oracles/generate.py
RC_X0 = (26.0, 40.0, 7.0, 1.0, 39.0, 40.0)
RC_DECAY_10MS = (26.670530113427517241, 20.030836222419871185, -2.5652157175067167517,
                 -23.589655022600313258, 17.970615337617802911, 19.354844565047686659)
SETTLE_2PCT_TAU10MS = 0.039120230054281460586

CH4 = PRESETS["ch4-case1"].system


def test_rk4_zero_field():
    x = (1.0, -2.0, 3.5)
    assert rk4_step(lambda y: (0.0, 0.0, 0.0), x, 0.1) == x


def test_rk4_scalar_decay():
    (x,) = rk4_step(lambda y: (-y[0],), (1.0,), 0.1)
    assert abs(x - math.exp(-0.1)) <= 0.1**5 / 120


def test_rk4_linear_six_state_against_matrix_exponential():
    p = SpvdgParams()
    x = RC_X0
    for _ in range(1000):
        x = rk4_step(lambda y: spvdg_derivatives(p, y, (0.0, 0.0, 0.125), 0.0, 0.0), x, 1e-5)
    assert np.max(np.abs(np.array(x) - RC_DECAY_10MS)) <= 1e-8


def test_rk4_errors():
    with pytest.raises(ValueError):
        rk4_step(lambda y: y, (1.0,), 0.0)
    with pytest.raises(NonFinite):
        rk4_step(lambda y: (math.inf,), (1.0,), 1e-3)


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(temperature=((0.5, 298.0),))
    with pytest.raises(ValueError):
        Schedule(load=((0.0, 8.0), (1.0, 5.0), (1.0, 6.0)))
    with pytest.raises(ValueError):
        Schedule(irradiance=((0.0, -5.0),))


def test_schedule_lookup():
    s = Schedule(irradiance=((0.0, 1000.0), (1.5, 500.0)), load=((0.0, 8.0), (0.7, 5.0)))
    assert s.at(1.49) == (298.0, 1000.0, 5.0)
    assert s.at(1.5) == (298.0, 500.0, 5.0)
    assert s.events() == (0.7, 1.5)


@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(duration=-1.0), dict(controller="mpc"),
                                dict(record_stride=0), dict(dob_refs="never")])
def test_simconfig_validation(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_equilibrium_is_fixed_point():
    sch = Schedule.constant(298.15, 1000.0, 8.0)
    tr = run_scenario(sch, CH4, SimConfig(duration=0.05))
    assert np.max(np.abs(tr.x - tr.x[0])) <= 1e-6
    assert np.allclose(np.diff(tr.t), 1e-4)


def test_trace_uniform_sampling_and_columns():
    sch = Schedule.constant(298.15, 1000.0, 8.0)
    tr = run_scenario(sch, CH4, SimConfig(duration=0.01, record_stride=7))
    assert np.allclose(np.diff(tr.t), 7e-5)
    assert np.all(np.isnan(tr.series("d1hat")))
    assert np.all(tr.series("d2") == 24.0)
    with pytest.raises(KeyError):
        tr.series("x7")


def test_power_balance_at_equilibrium():
    sch = Schedule.constant(298.15, 1000.0, 8.0)
    tr = run_scenario(sch, CH4, SimConfig(duration=0.01))
    assert abs(power_balance(tr, 0.005)) <= 1e-3 * tr.p_load[0]


def test_power_balance_idle_battery():
    tr = Trace.from_series([0.0, 1e-4], x4=[0.0, 0.0], P_pv=[230.0, 230.0], P_batt=[0.0, 0.0],
                           P_load=[200.0, 200.0], P_loss=[30.0, 30.0])
    assert power_balance(tr, 1e-4) == 0.0


def test_power_balance_during_transient_is_stored_energy_rate():
    sch = Schedule(temperature=((0.0, 298.15),), irradiance=((0.0, 1000.0),),
                   load=((0.0, 8.0), (0.005, 5.0)))
    tr = run_scenario(sch, CH4, SimConfig(duration=0.02))
    p = CH4.plant
    for t in (0.0052, 0.006, 0.01):
        k = tr.index_at(t)
        rates = spvdg_derivatives(p, tr.x[k], tr.d[k], *tr.u[k])
        assert power_balance(tr, t) == pytest.approx(stored_energy_rate(p, tr.x[k], rates),
                                                     rel=1e-9, abs=1e-6)
        assert abs(power_balance(tr, t)) > 1e-3


def test_settling_constant_signal():
    tr = Trace.from_series(np.arange(0, 0.1, 1e-4), x6=np.full(1000, 40.0))
    assert settling_time(tr, "x6", 40.0, 0.01, 0.0) == 0.0


def test_settling_first_order_step():
    t = np.arange(0.0, 0.2, 1e-5)
    y = 1.0 - np.exp(-t / 0.01)
    tr = Trace.from_series(t, x6=y)
    assert settling_time(tr, "x6", 1.0, 0.02, 0.0) == pytest.approx(SETTLE_2PCT_TAU10MS, abs=1e-5)


def test_settling_never():
    t = np.arange(0.0, 0.1, 1e-4)
    tr = Trace.from_series(t, x6=np.where(t > 0.05, 30.0, 40.0))
    with pytest.raises(NeverSettles):
        settling_time(tr, "x6", 40.0, 0.01, 0.0)


def test_settling_window_ends_at_next_event():
    t = np.arange(0.0, 0.2, 1e-4)
    tr = Trace.from_series(t, x6=np.where(t < 0.1, 40.0, 30.0))
    tr.events = (0.1,)
    assert settling_time(tr, "x6", 40.0, 0.01, 0.0) == 0.0
    assert settling_time(tr, np.abs(tr.series("x6") - 40.0), 0.0, 0.0, 0.0, abs_tol=0.5) == 0.0


@given(st.floats(0.001, 0.02), st.floats(0.005, 0.05))
def test_settling_first_order_property(tau, band):
    t = np.arange(0.0, 0.5, 1e-5)
    tr = Trace.from_series(t, x6=1.0 - np.exp(-t / tau))
    assert settling_time(tr, "x6", 1.0, band, 0.0) == pytest.approx(-tau * math.log(band), abs=1.1e-5)


def _fixed_duty_run(dt, dur=0.02, every=1e-4):
    """Open-loop six-state plant with the PV array attached, duties fixed."""
    sp = CH4
    curve = iv_curve(KC200GT, Environment(298.15, 1000.0))
    x = (25.0, 41.0, 8.0, 0.5, 39.5, 39.0)
    u1, u2 = 0.45, 0.42
    n = int(round(dur / dt))
    stride = int(round(every / dt))
    out = []
    for k in range(n + 1):
        if k % stride == 0:
            out.append(x)
        x = rk4_step(lambda y: spvdg_derivatives(sp.plant, y, (curve.current(y[0]), 24.0, 0.125),
                                                 u1, u2), x, dt)
    return np.array(out)


def test_halving_dt_converged():
    a = _fixed_duty_run(1e-5)
    b = _fixed_duty_run(5e-6)
    assert a.shape == b.shape
    assert np.max(np.abs(a - b) / np.maximum(np.abs(b), 1.0)) <= 1e-4


@pytest.mark.parametrize("controller", ["backstep", "dob-backstep"])
def test_halving_dt_closed_loop(controller):
    # controller sampled every 10 us in both runs; only the integrator step changes
    sch = Schedule(temperature=((0.0, 298.15),), irradiance=((0.0, 1000.0), (0.002, 800.0)),
                   load=((0.0, 8.0), (0.01, 7.0)))
    sp = PRESETS["ch5-case1"].system if controller == "dob-backstep" else CH4
    cfg = SimConfig(duration=0.02, controller=controller, control_period=1e-5)
    a = run_scenario(sch, sp, cfg)
    b = run_scenario(sch, sp, replace(cfg, dt=5e-6, record_stride=20))
    assert np.allclose(a.t, b.t)
    assert np.max(np.abs(a.x - b.x) / np.maximum(np.abs(b.x), 1.0)) <= 1e-4


def test_control_period_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=1e-5, control_period=1.5e-5)
    assert SimConfig(dt=5e-6, control_period=1e-5).control_every == 2


def test_nonfinite_carries_timestamp():
    sch = Schedule(temperature=((0.0, 298.15),), irradiance=((0.0, 1000.0),),
                   load=((0.0, 8.0), (0.001, 5.0)))
    sp = replace(CH4, plant=SpvdgParams(C_L=1e-9))
    with pytest.raises(NonFinite) as info:
        run_scenario(sch, sp, SimConfig(duration=0.01))
    assert info.value.t is not None and 0.001 <= info.value.t <= 0.01
    assert "t = " in str(info.value)


def test_constant_d1_mode_runs():
    sch = Schedule.constant(298.15, 1000.0, 8.0)
    tr = run_scenario(sch, CH4, SimConfig(duration=0.005, constant_d1=True))
    assert np.all(tr.series("d1") == tr.series("d1")[0])


def test_pi_perturb_short_run_duties_admissible():
    p = PRESETS["ch3-unified"]
    tr = run_scenario(p.schedule, p.system, replace(p.sim, duration=0.06))
    assert np.all((tr.u >= 0) & (tr.u <= 1))
    assert np.all(np.isfinite(tr.x))


def test_feedforward_tags_straddling_pairs():
    p = PRESETS["ch2-estimate"]
    tr = run_scenario(p.schedule, p.system, replace(p.sim, duration=1.3))
    straddling = [e for e in tr.estimates if e.straddles_event]
    clean = [e for e in tr.estimates if not e.straddles_event and e.status == "ok" and e.t > 1.0]
    assert straddling and all(abs(e.t - 1.025) < 1e-9 for e in straddling)
    assert clean and clean[-1].lam_hat == pytest.approx(1000.0, rel=0.005)
    assert np.all(np.isnan(tr.p_batt))


def test_runs_are_deterministic():
    p = PRESETS["ch5-case3"]
    sch = Schedule(temperature=((0.0, 298.15),), irradiance=((0.0, 1000.0),),
                   load=((0.0, 5.0), (0.01, 7.0)))
    a = run_scenario(sch, p.system, replace(p.sim, duration=0.02))
    b = run_scenario(sch, p.system, replace(p.sim, duration=0.02))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.dhat, b.dhat)
