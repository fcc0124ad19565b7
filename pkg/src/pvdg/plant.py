"""State-space-averaged power stage models and steady-state references.

Two plants live here: the three-state PV boost converter feeding a resistor,
and the six-state PV + battery microgrid::

    x1  PV input capacitor voltage      x4  battery inductor current
    x2  PV converter output cap voltage x5  battery converter output cap voltage
    x3  PV inductor current             x6  DC bus voltage

driven by duties u1 (PV converter) and u2 (battery converter) and by the
disturbances d1 (PV current), d2 (battery voltage), d3 (load admittance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple

from .errors import InfeasibleOperatingPoint, InfeasibleReferences
from .pvmodel import OperatingPoint


def _check_positive(obj):
    for f in fields(obj):
        value = getattr(obj, f.name)
        if not value > 0:
            raise ValueError(f"{type(obj).__name__}.{f.name} must be positive, got {value}")


@dataclass(frozen=True)
class BoostParams:
    L: float = 5e-3
    r: float = 0.2
    C_a: float = 200e-6
    C_b: float = 200e-6
    V_D: float = 0.6
    R_ld: float = 50.0

    def __post_init__(self):
        _check_positive(self)


class BoostState(NamedTuple):
    i_L: float
    v_pv: float
    v_o: float


@dataclass(frozen=True)
class SpvdgParams:
    C_pvi: float = 3e-3
    C_pvo: float = 3e-3
    C_bo: float = 3e-3
    C_L: float = 3e-3
    L_pv: float = 10e-3
    L_b: float = 10e-3
    R_pv: float = 0.5
    R_b: float = 0.5
    R_pvo: float = 0.1
    R_bo: float = 0.1

    def __post_init__(self):
        _check_positive(self)


class SpvdgState(NamedTuple):
    x1: float
    x2: float
    x3: float
    x4: float
    x5: float
    x6: float


class Disturbances(NamedTuple):
    d1: float
    d2: float
    d3: float


class RefSet(NamedTuple):
    x1ref: float
    x2ref: float
    x3ref: float
    x4ref: float
    x5ref: float
    x6ref: float
    u1ss: float
    u2ss: float

    @property
    def state(self) -> SpvdgState:
        return SpvdgState(*self[:6])


def _check_duty(u, name):
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {u}")


# -- three-state boost ---------------------------------------------------------

def boost_derivatives(params: BoostParams, state, i_pv: float, u: float) -> BoostState:
    """Averaged boost converter rates (di_L/dt, dv_pv/dt, dv_o/dt)."""
    _check_duty(u, "duty")
    i_L, v_pv, v_o = state
    p = params
    di = (v_pv - p.r * i_L - p.V_D - v_o) / p.L + (p.V_D + v_o) * u / p.L
    dv = (i_pv - i_L) / p.C_a
    dvo = (i_L - v_o / p.R_ld) / p.C_b - i_L * u / p.C_b
    return BoostState(di, dv, dvo)


def boost_steady_refs(v_pvr: float, i_pvr: float, params: BoostParams) -> tuple[float, float, float]:
    """Steady inductor current, output voltage and duty holding the PV at (v_pvr, i_pvr).

    Returns ``(i_Lr, v_or, u_r)``.
    """
    p = params
    disc = p.V_D**2 + 4.0 * i_pvr * p.R_ld * (v_pvr - p.r * i_pvr)
    if disc < 0:
        raise InfeasibleOperatingPoint(f"negative discriminant {disc:.4g}")
    v_or = (-p.V_D + math.sqrt(disc)) / 2.0
    u_r = 1.0 - (v_pvr - i_pvr * p.r) / (p.V_D + v_or)
    if i_pvr != 0.0 and not 0.0 < u_r < 1.0:
        raise InfeasibleOperatingPoint(f"steady duty {u_r:.4g} outside (0, 1)")
    return i_pvr, v_or, u_r


# -- six-state microgrid -------------------------------------------------------

def spvdg_derivatives(params: SpvdgParams, state, d, u1: float, u2: float) -> SpvdgState:
    """Averaged six-state microgrid rates, affine in (u1, u2)."""
    x1, x2, x3, x4, x5, x6 = state
    d1, d2, d3 = d
    p = params
    return SpvdgState(
        (d1 - x3) / p.C_pvi,
        (x3 - (x2 - x6) / p.R_pvo - x3 * u1) / p.C_pvo,
        (x1 - x2 - x3 * p.R_pv + x2 * u1) / p.L_pv,
        (d2 - x4 * p.R_b - x5 + x5 * u2) / p.L_b,
        (x4 - (x5 - x6) / p.R_bo - x4 * u2) / p.C_bo,
        ((x2 - x6) / p.R_pvo + (x5 - x6) / p.R_bo - x6 * d3) / p.C_L,
    )


def steady_duties(params: SpvdgParams, state, d2: float) -> tuple[float, float]:
    """Duties that zero the x3 and x4 rates at ``state`` (inductor volt-second balance)."""
    x1, x2, x3, x4, x5, _ = state
    u1 = 1.0 - (x1 - params.R_pv * x3) / x2
    u2 = 1.0 - (d2 - params.R_b * x4) / x5
    return u1, u2


def generate_references(params: SpvdgParams, Vdc: float, mpp: OperatingPoint,
                        d2: float, d3: float) -> RefSet:
    """Secondary-level references for all six states plus the steady duties.

    The bus is pinned at ``Vdc`` and the PV at ``mpp``; the remaining states
    follow from zeroing the averaged model.  Two quadratics appear:

    * PV converter output voltage, ``x2^2 - Vdc x2 + R_pvo (R_pv x3^2 - x1 x3) = 0``,
      taking the root near the bus voltage;
    * battery current, ``R_b R_bo x4^2 - R_bo d2 x4 + (x5^2 - x5 Vdc) = 0``, taking
      the low-loss root (the other one dissipates almost all battery power in R_b).

    Raises
    ------
    InfeasibleReferences
        Negative discriminant, non-positive capacitor voltage or a steady duty
        outside [0, 1].
    """
    p = params
    x6 = Vdc
    x1 = mpp.v
    x3 = mpp.i
    if not x6 > 0:
        raise InfeasibleReferences(f"bus voltage must be positive, got {x6}")
    c1 = p.R_pvo * (p.R_pv * x3 * x3 - x1 * x3)
    disc1 = x6 * x6 - 4.0 * c1
    if disc1 < 0:
        raise InfeasibleReferences(f"PV-side discriminant {disc1:.4g} < 0")
    x2 = (x6 + math.sqrt(disc1)) / 2.0
    x5 = x6 * (1.0 + p.R_bo / p.R_pvo + p.R_bo * d3) - p.R_bo / p.R_pvo * x2
    if not x5 > 0:
        raise InfeasibleReferences(f"battery converter voltage {x5:.4g} V is not positive")
    a2 = p.R_b * p.R_bo
    b2 = -p.R_bo * d2
    c2 = x5 * x5 - x5 * x6
    disc2 = b2 * b2 - 4.0 * a2 * c2
    if disc2 < 0:
        raise InfeasibleReferences(f"battery-side discriminant {disc2:.4g} < 0")
    # small root of a2 x^2 + b2 x + c2, written without cancellation
    x4 = 2.0 * c2 / (-b2 + math.sqrt(disc2))
    u1, u2 = steady_duties(p, (x1, x2, x3, x4, x5, x6), d2)
    if not (0.0 <= u1 <= 1.0 and 0.0 <= u2 <= 1.0):
        raise InfeasibleReferences(f"steady duties ({u1:.4g}, {u2:.4g}) outside [0, 1]")
    return RefSet(x1, x2, x3, x4, x5, x6, u1, u2)


class PowerTerms(NamedTuple):
    pv: float
    battery: float
    load: float
    losses: float

    @property
    def balance(self) -> float:
        return self.pv + self.battery - self.load - self.losses


def power_terms(params: SpvdgParams, state, d) -> PowerTerms:
    """Source, load and resistive-loss powers of the six-state model."""
    x1, x2, x3, x4, x5, x6 = state
    d1, d2, d3 = d
    p = params
    losses = (p.R_pv * x3 * x3 + p.R_b * x4 * x4
              + (x2 - x6) ** 2 / p.R_pvo + (x5 - x6) ** 2 / p.R_bo)
    return PowerTerms(x1 * d1, d2 * x4, x6 * x6 * d3, losses)


def stored_energy_rate(params: SpvdgParams, state, rates) -> float:
    """Time derivative of the energy held in the four capacitors and two inductors."""
    p = params
    caps_inds = (p.C_pvi, p.C_pvo, p.L_pv, p.L_b, p.C_bo, p.C_L)
    return sum(k * x * dx for k, x, dx in zip(caps_inds, state, rates))
