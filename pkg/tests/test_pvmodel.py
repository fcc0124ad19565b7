import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvdg.errors import OffCurve
from pvdg.pvmodel import (CH2_ARRAY, KC200GT, Environment, OperatingPoint, PvArrayParams,
                          find_mpp, is_unimodal, iv_curve, open_circuit_voltage, photo_current,
                          pv_current, pv_current_sensitivities, residual, saturation_current)

# 50-digit evaluations from tests/oracles/generate.py
I_S_323_CH2 = 4.789346129000999049e-7
I_CH2_298_1000 = {0.0: 4.7936084970932743662, 10.0: 4.725154323750020679,
                  14.6: 4.4418566193666188337, 18.0: 0.44404240381414734871}
I_KC_298_1000_V263 = 7.6087851396963188247
I_KC_323_600_V20 = 4.8468707904883953723

temps = st.floats(273.0, 350.0)
irrs = st.floats(100.0, 1500.0)


def test_photo_current_reference_conditions():
    assert photo_current(CH2_ARRAY, Environment(298.0, 1000.0)) == pytest.approx(4.8, abs=1e-15)
    assert photo_current(CH2_ARRAY, Environment(298.0, 500.0)) == pytest.approx(2.4, abs=1e-15)


def test_photo_current_temperature_term():
    k = 0.0045
    params = PvArrayParams(k_I=k)
    assert photo_current(params, Environment(323.0, 1000.0)) == pytest.approx(4.8 + 25 * k, rel=1e-14)


def test_saturation_current_at_reference_is_table_value():
    assert saturation_current(CH2_ARRAY, 298.0) == 1.37e-8


def test_saturation_current_323_matches_high_precision():
    assert saturation_current(CH2_ARRAY, 323.0) == pytest.approx(I_S_323_CH2, rel=1e-12)


def test_saturation_current_increasing():
    assert saturation_current(CH2_ARRAY, 310.0) < saturation_current(CH2_ARRAY, 320.0)


@pytest.mark.parametrize("v, expected", sorted(I_CH2_298_1000.items()))
def test_pv_current_matches_bisection_oracle(v, expected):
    assert pv_current(CH2_ARRAY, Environment(298.0, 1000.0), v) == pytest.approx(expected, abs=1e-10)


def test_pv_current_kc200gt_oracle():
    assert pv_current(KC200GT, Environment(298.0, 1000.0), 26.3) == pytest.approx(
        I_KC_298_1000_V263, abs=1e-10)
    assert pv_current(KC200GT, Environment(323.0, 600.0), 20.0) == pytest.approx(
        I_KC_323_600_V20, abs=1e-10)


def test_pv_current_case_ii_mpp_on_curve():
    assert pv_current(CH2_ARRAY, Environment(298.0, 1000.0), 14.6) == pytest.approx(4.40, rel=0.02)


def test_dark_array():
    env = Environment(298.0, 0.0)
    assert pv_current(CH2_ARRAY, env, 0.0) == pytest.approx(0.0, abs=1e-12)
    i = pv_current(CH2_ARRAY, env, 10.0)
    assert i < 0
    assert abs(i) <= 10.0 / CH2_ARRAY.R_sh + saturation_current(CH2_ARRAY, 298.0) * math.exp(
        CH2_ARRAY.q * 10.0 / (CH2_ARRAY.n_s * CH2_ARRAY.K_B * 298.0))


@given(temps, irrs, st.floats(0.0, 1.0))
def test_residual_below_tolerance(T, lam, frac):
    env = Environment(T, lam)
    v = frac * open_circuit_voltage(CH2_ARRAY, env) * 1.05
    i = pv_current(CH2_ARRAY, env, v)
    assert abs(residual(CH2_ARRAY, env, OperatingPoint(v, i))) <= 1e-9


@given(temps, irrs, st.floats(0.0, 1.0))
def test_warm_start_agrees_with_cold_solve(T, lam, frac):
    env = Environment(T, lam)
    v = frac * open_circuit_voltage(CH2_ARRAY, env)
    curve = iv_curve(CH2_ARRAY, env)
    assert curve.current(v, guess=0.0) == pytest.approx(curve.current(v), abs=1e-10)


def _fd(params, env, v):
    hT, hl = 0.01, 0.1
    dT = (pv_current(params, Environment(env.T + hT, env.lam), v)
          - pv_current(params, Environment(env.T - hT, env.lam), v)) / (2 * hT)
    dl = (pv_current(params, Environment(env.T, env.lam + hl), v)
          - pv_current(params, Environment(env.T, env.lam - hl), v)) / (2 * hl)
    return dT, dl


@pytest.mark.parametrize("params", [CH2_ARRAY, KC200GT], ids=["ch2", "kc200gt"])
def test_sensitivities_match_finite_differences(params):
    rng = np.random.default_rng(7)
    for _ in range(50):
        env = Environment(rng.uniform(273, 350), rng.uniform(100, 1500))
        v = rng.uniform(0.1, 0.95) * open_circuit_voltage(params, env)
        i = pv_current(params, env, v)
        dT, dl = pv_current_sensitivities(params, env, OperatingPoint(v, i))
        fT, fl = _fd(params, env, v)
        assert dT == pytest.approx(fT, rel=1e-4, abs=1e-9)
        assert dl == pytest.approx(fl, rel=1e-4)


def test_dlambda_without_series_resistance():
    params = PvArrayParams(R_s=0.0)
    env = Environment(310.0, 700.0)
    i = pv_current(params, env, 12.0)
    _, dl = pv_current_sensitivities(params, env, OperatingPoint(12.0, i))
    assert dl == (params.I_sc + params.k_I * (310.0 - 298.0)) / 1000.0


def test_dlambda_positive_at_mpp():
    env = Environment(298.0, 1000.0)
    _, dl = pv_current_sensitivities(CH2_ARRAY, env, find_mpp(CH2_ARRAY, env))
    assert dl > 0


def test_sensitivities_reject_off_curve_point():
    with pytest.raises(OffCurve):
        pv_current_sensitivities(CH2_ARRAY, Environment(298.0, 1000.0), OperatingPoint(14.6, 3.0))


@pytest.mark.parametrize("T, lam, v, i, p", [
    (298.0, 1000.0, 14.6, 4.40, 64.2),
    (323.0, 500.0, 12.3, 2.26, 28.5),
])
def test_find_mpp_table_rows(T, lam, v, i, p):
    mpp = find_mpp(CH2_ARRAY, Environment(T, lam))
    assert mpp.v == pytest.approx(v, rel=0.02)
    assert mpp.i == pytest.approx(i, rel=0.02)
    assert mpp.power == pytest.approx(p, rel=0.02)


@pytest.mark.parametrize("params, T, lam", [
    (CH2_ARRAY, 298.0, 1000.0), (CH2_ARRAY, 340.0, 150.0),
    (KC200GT, 298.0, 1500.0), (KC200GT, 273.15, 200.0),
])
def test_find_mpp_matches_dense_sweep(params, T, lam):
    env = Environment(T, lam)
    voc = open_circuit_voltage(params, env)
    curve = iv_curve(params, env)
    vs = np.linspace(0.0, voc, 100_001)
    guess, best_p, best_v = None, -1.0, 0.0
    for v in vs:
        guess = curve.current(float(v), guess)
        if v * guess > best_p:
            best_p, best_v = v * guess, float(v)
    mpp = find_mpp(params, env)
    assert abs(mpp.v - best_v) <= 2e-3
    assert mpp.power >= best_p - 1e-9


def test_mpp_voltage_falls_with_temperature():
    for lam in (500.0, 1000.0):
        cold = find_mpp(CH2_ARRAY, Environment(298.0, lam))
        hot = find_mpp(CH2_ARRAY, Environment(323.0, lam))
        assert hot.v < cold.v


@given(temps, irrs)
def test_power_curve_unimodal(T, lam):
    assert is_unimodal(CH2_ARRAY, Environment(T, lam))


def test_operating_point_power():
    op = OperatingPoint(14.6, 4.4)
    assert op.power == 14.6 * 4.4


@pytest.mark.parametrize("kw", [dict(T_r=0.0), dict(p=0.9), dict(R_sh=0.0), dict(I_sc=-1.0),
                                dict(n_s=0), dict(R_s=-0.1)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        PvArrayParams(**kw)


def test_environment_validation():
    with pytest.raises(ValueError):
        Environment(0.0, 1000.0)
    with pytest.raises(ValueError):
        Environment(298.0, -1.0)


def test_solve_far_outside_operating_range():
    # saturation current of order 1e6 A: round-off alone exceeds 1e-9 A
    env = Environment(1008.87, 42.29)
    curve = iv_curve(CH2_ARRAY, env)
    i = curve.current(8.88)
    assert math.isfinite(i)
    scale = curve.i_s * math.exp(curve.a * (8.88 + i * CH2_ARRAY.R_s))
    assert abs(curve.residual(8.88, i)) <= 64 * 2.2e-16 * scale
