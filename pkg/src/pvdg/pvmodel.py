"""Single-diode PV array model.

Photo/saturation currents, the implicit I-V solve, closed-form sensitivities
with respect to temperature and irradiance, and a direct MPP search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NoBracket, OffCurve

Q_E = 1.6e-19  # electron charge (C)
K_B = 1.38e-23  # Boltzmann constant (J/K)
E_GP = 1.1  # band-gap energy (eV)

# exp() argument ceiling; beyond this the diode term swamps everything anyway
_EXP_MAX = 700.0

RESIDUAL_TOL = 1e-9
ON_CURVE_TOL = 1e-6


@dataclass(frozen=True)
class PvArrayParams:
    """Panel/array constants of the single-diode equivalent circuit.

    ``k_I`` is not part of the published parameter tables; the default is a
    calibrated value, see README.
    """

    T_r: float = 298.0
    lambda_r: float = 1000.0
    p: float = 1.0
    I_r: float = 1.37e-8
    I_sc: float = 4.8
    k_I: float = 0.01
    R_s: float = 0.2
    R_sh: float = 150.0
    n_s: int = 36
    n_p: int = 1
    q: float = Q_E
    K_B: float = K_B
    E_gp: float = E_GP

    def __post_init__(self):
        if not self.T_r > 0 or not self.lambda_r > 0:
            raise ValueError("reference temperature and irradiance must be positive")
        if self.p < 1:
            raise ValueError(f"ideality factor must be >= 1, got {self.p}")
        if self.R_s < 0 or not self.R_sh > 0:
            raise ValueError("need R_s >= 0 and R_sh > 0")
        if not self.I_sc > 0 or not self.I_r > 0:
            raise ValueError("I_sc and I_r must be positive")
        if int(self.n_s) != self.n_s or int(self.n_p) != self.n_p or self.n_s < 1 or self.n_p < 1:
            raise ValueError("cell counts must be integers >= 1")


@dataclass(frozen=True)
class Environment:
    T: float
    lam: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"cell temperature must be positive, got {self.T}")
        if self.lam < 0:
            raise ValueError(f"irradiance must be non-negative, got {self.lam}")


@dataclass(frozen=True)
class OperatingPoint:
    v: float
    i: float

    @property
    def power(self) -> float:
        return self.v * self.i


# 36-cell, 4.8 A array of the boost-stage scenarios
CH2_ARRAY = PvArrayParams()

# Kyocera KC200GT, single-diode values fitted to its datasheet
KC200GT = PvArrayParams(p=1.3, I_r=9.825e-8, I_sc=8.21, k_I=0.0032, R_s=0.221,
                        R_sh=415.405, n_s=54, n_p=1)


def photo_current(params: PvArrayParams, env: Environment) -> float:
    """Photo-generated current of a single cell string, linear in irradiance."""
    return (params.I_sc + params.k_I * (env.T - params.T_r)) * env.lam / params.lambda_r


def _gap_factor(params: PvArrayParams, T: float) -> float:
    return math.exp(params.q * params.E_gp * (1.0 / params.T_r - 1.0 / T) / (params.p * params.K_B))


def saturation_current(params: PvArrayParams, T: float) -> float:
    """Diode reverse saturation current at cell temperature ``T``."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    return params.I_r * (T / params.T_r) ** 3 * _gap_factor(params, T)


def saturation_current_dT(params: PvArrayParams, T: float) -> float:
    """Temperature derivative of :func:`saturation_current`."""
    k = params.q * params.E_gp / (params.p * params.K_B)
    return params.I_r / params.T_r**3 * (3.0 * T * T + k * T) * _gap_factor(params, T)


class IVCurve:
    """The implicit I-V relation with the environment folded into constants.

    Residual ``f(i) = n_p I_g - n_p I_s (exp(a (v + i R_s)) - 1) - (v + i R_s)/R_sh - i``
    is strictly decreasing in ``i``, so every voltage has exactly one current.
    """

    __slots__ = ("params", "env", "ig", "i_s", "a", "rs", "rsh")

    def __init__(self, params: PvArrayParams, env: Environment):
        self.params = params
        self.env = env
        self.ig = params.n_p * photo_current(params, env)
        self.i_s = params.n_p * saturation_current(params, env.T)
        self.a = params.q / (params.n_s * params.p * params.K_B * env.T)
        self.rs = params.R_s
        self.rsh = params.R_sh

    def residual(self, v: float, i: float) -> float:
        z = v + i * self.rs
        return self.ig - self.i_s * (math.exp(min(self.a * z, _EXP_MAX)) - 1.0) - z / self.rsh - i

    def _f_df(self, v: float, i: float) -> tuple[float, float]:
        z = v + i * self.rs
        e = math.exp(min(self.a * z, _EXP_MAX))
        f = self.ig - self.i_s * (e - 1.0) - z / self.rsh - i
        df = -self.i_s * e * self.a * self.rs - self.rs / self.rsh - 1.0
        return f, df

    def _bracket(self, v: float) -> tuple[float, float]:
        width = abs(self.ig) + 1.0
        hi = width
        lo = -width
        for _ in range(200):
            if self.residual(v, lo) > 0.0:
                break
            lo *= 2.0
        else:
            raise NoBracket(f"no sign change below i = {lo:.3g} A at v = {v} V")
        for _ in range(200):
            if self.residual(v, hi) < 0.0:
                break
            hi *= 2.0
        else:
            raise NoBracket(f"no sign change above i = {hi:.3g} A at v = {v} V")
        return lo, hi

    def current(self, v: float, guess: float | None = None) -> float:
        """Solve for the terminal current at voltage ``v``.

        With ``guess`` a few plain Newton steps are tried first; any failure falls
        back to the bracketed, bisection-safeguarded iteration.
        """
        if guess is not None:
            i = guess
            for _ in range(8):
                f, df = self._f_df(v, i)
                if abs(f) <= 1e-12:
                    return i
                i -= f / df
            f = self.residual(v, i)
            if abs(f) <= 1e-12 and math.isfinite(i):
                return i

        lo, hi = self._bracket(v)
        i = 0.5 * (lo + hi)
        best_i, best_f = i, math.inf
        for _ in range(300):
            f, df = self._f_df(v, i)
            if abs(f) < best_f:
                best_i, best_f = i, abs(f)
            if f == 0.0 or best_f <= 1e-13:
                break
            if f > 0.0:
                lo = i
            else:
                hi = i
            step = i - f / df
            if not lo < step < hi:
                step = 0.5 * (lo + hi)
            if step == i or hi - lo <= 4e-16 * max(1.0, abs(i)):
                break
            i = step
        # far outside the operating range the terms reach 1e6 A or more and
        # round-off alone exceeds the absolute tolerance
        z = v + best_i * self.rs
        scale = abs(self.ig) + self.i_s * math.exp(min(self.a * z, _EXP_MAX)) + abs(z / self.rsh)
        if best_f > max(RESIDUAL_TOL, 64.0 * 2.2e-16 * (scale + abs(best_i))):
            raise NoBracket(f"I-V solve stalled at |f| = {best_f:.3e} A (v = {v} V)")
        return best_i

    def open_circuit_voltage(self) -> float:
        """Voltage at which the terminal current is zero."""
        if self.ig <= 0.0:
            return 0.0
        # at i = 0 the residual in v is monotone: ig - i_s(e^{a v} - 1) - v/rsh
        lo, hi = 0.0, 1.0
        while self.residual(hi, 0.0) > 0.0:
            lo, hi = hi, 2.0 * hi
            if hi > 1e6:
                raise NoBracket("open-circuit voltage not bracketed")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.residual(mid, 0.0) > 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-12:
                break
        return 0.5 * (lo + hi)


@lru_cache(maxsize=256)
def iv_curve(params: PvArrayParams, env: Environment) -> IVCurve:
    return IVCurve(params, env)


def pv_current(params: PvArrayParams, env: Environment, v_pv: float) -> float:
    """Array current at terminal voltage ``v_pv`` (residual below 1e-9 A)."""
    return iv_curve(params, env).current(v_pv)


def residual(params: PvArrayParams, env: Environment, op: OperatingPoint) -> float:
    return iv_curve(params, env).residual(op.v, op.i)


@lru_cache(maxsize=256)
def open_circuit_voltage(params: PvArrayParams, env: Environment) -> float:
    return iv_curve(params, env).open_circuit_voltage()


def pv_current_sensitivities(params: PvArrayParams, env: Environment,
                             op: OperatingPoint) -> tuple[float, float]:
    """Partial derivatives of the array current w.r.t. temperature and irradiance.

    Both are taken along the implicit curve at fixed terminal voltage.

    Returns
    -------
    (dI_dT, dI_dlambda) in A/K and A m^2/W.

    Raises
    ------
    OffCurve
        If ``op`` is further than 1e-6 A from the curve of ``env``.
    """
    curve = iv_curve(params, env)
    r = curve.residual(op.v, op.i)
    if not abs(r) <= ON_CURVE_TOL:
        raise OffCurve(f"operating point residual {r:.3e} A exceeds {ON_CURVE_TOL:g} A")
    T = env.T
    n_p = params.n_p
    z = op.v + op.i * params.R_s
    e = math.exp(min(curve.a * z, _EXP_MAX))
    i_s = saturation_current(params, T)
    den = 1.0 + n_p * i_s * curve.a * params.R_s * e + params.R_s / params.R_sh
    num_T = (n_p * params.k_I * env.lam / params.lambda_r
             - n_p * saturation_current_dT(params, T) * (e - 1.0)
             + n_p * i_s * curve.a * z / T * e)
    num_lam = n_p * (params.I_sc + params.k_I * (T - params.T_r)) / params.lambda_r
    return num_T / den, num_lam / den


def power_curve(params: PvArrayParams, env: Environment, voltages) -> np.ndarray:
    curve = iv_curve(params, env)
    out = np.empty(len(voltages))
    guess = None
    for k, v in enumerate(voltages):
        guess = curve.current(float(v), guess)
        out[k] = v * guess
    return out


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def find_mpp(params: PvArrayParams, env: Environment, v_tol: float = 1e-6) -> OperatingPoint:
    """Maximum power point on the curve of ``env``.

    A 256-point sweep over [0, V_oc] locates the peak cell (and checks that
    dP/dV changes sign once); golden-section then refines it to ``v_tol``.
    """
    if not env.lam > 0:
        raise ValueError("MPP undefined without irradiance")
    curve = iv_curve(params, env)
    voc = open_circuit_voltage(params, env)
    grid = np.linspace(0.0, voc, 256)
    p = power_curve(params, env, grid)
    k = int(np.argmax(p))
    a = float(grid[max(k - 1, 0)])
    b = float(grid[min(k + 1, len(grid) - 1)])

    def neg_power(v):
        return -v * curve.current(v)

    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = neg_power(c), neg_power(d)
    while b - a > v_tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = neg_power(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = neg_power(d)
    v = float(0.5 * (a + b))
    return OperatingPoint(v, curve.current(v))


def is_unimodal(params: PvArrayParams, env: Environment, n: int = 256) -> bool:
    """True when dP/dV changes sign exactly once over [0, V_oc]."""
    voc = open_circuit_voltage(params, env)
    p = power_curve(params, env, np.linspace(0.0, voc, n))
    s = np.sign(np.diff(p))
    s = s[s != 0]
    return int(np.count_nonzero(np.diff(s))) == 1
