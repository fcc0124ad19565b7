"""Back-stepping duty laws for the six-state microgrid.

The PV channel drives x1 to its reference through the virtual current
``alpha3 = d1 + K1 e1`` and picks u1 so that the (x2, x3) error energy decays
as ``-K2 e2^2 - K3 e3^2``.  The battery channel holds the bus through the
virtual voltage ``alpha5`` and picks u2 so that the (x4, x5) error energy
decays as ``-K4 e4^2 - K5 e5^2``.

Both duty laws divide by a bilinear error term that vanishes at the
reference; callers hold the previous duty when the guard trips.

With ``cross_terms=True`` the two inter-stage couplings (``-e1 e3`` from the
PV capacitor and ``e5 e6 / R_bo`` from the bus) are cancelled too, so the
composite error energy obeys ``dW/dt = -sum(K_i e_i^2)`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple

from ..errors import DegenerateDenominator
from ..plant import RefSet, SpvdgParams, SpvdgState

DEN_EPS = 1e-4


@dataclass(frozen=True)
class BackstepGains:
    K1: float = 10.0
    K2: float = 0.04
    K3: float = 0.04
    K4: float = 0.04
    K5: float = 0.04
    K6: float = 15.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"gain {f.name} must be positive")


@dataclass(frozen=True)
class ObserverGains:
    rho1: float = 10.0
    rho2: float = 1.0
    rho3: float = 0.01

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"observer gain {f.name} must be positive")


class ObserverState(NamedTuple):
    d1hat: float
    d2hat: float
    d3hat: float


class Errors(NamedTuple):
    e1: float
    e2: float
    e3: float
    e4: float
    e5: float
    e6: float


def backstep_virtual_alpha3(e1: float, d1: float, K1: float) -> float:
    """Virtual PV inductor current making the x1 error energy decay as -K1 e1^2."""
    return d1 + K1 * e1


def backstep_virtual_alpha5(x2: float, x6: float, e6: float, d3: float, K6: float,
                            params: SpvdgParams) -> float:
    """Virtual battery-converter voltage making the bus error decay as -K6 e6^2."""
    p = params
    return (-p.R_bo / p.R_pvo * x2
            + p.R_bo * x6 * (1.0 / p.R_pvo + 1.0 / p.R_bo + d3)
            - K6 * e6 * p.R_bo)


def tracking_errors(state, refs: RefSet, d1: float, d3: float,
                    gains: BackstepGains, params: SpvdgParams) -> Errors:
    """Errors of the back-stepping chain; e3 and e5 are measured against the
    virtual controls, the others against the references."""
    x1, x2, x3, x4, x5, x6 = state
    e1 = x1 - refs.x1ref
    e6 = x6 - refs.x6ref
    e3 = x3 - backstep_virtual_alpha3(e1, d1, gains.K1)
    e5 = x5 - backstep_virtual_alpha5(x2, x6, e6, d3, gains.K6, params)
    return Errors(e1, x2 - refs.x2ref, e3, x4 - refs.x4ref, e5, e6)


def error_energy(errors: Errors, params: SpvdgParams) -> float:
    """Composite Lyapunov value 1/2 (C_pvi e1^2 + C_pvo e2^2 + L_pv e3^2 + L_b e4^2 + C_bo e5^2 + C_L e6^2)."""
    p = params
    e1, e2, e3, e4, e5, e6 = errors
    return 0.5 * (p.C_pvi * e1 * e1 + p.C_pvo * e2 * e2 + p.L_pv * e3 * e3
                  + p.L_b * e4 * e4 + p.C_bo * e5 * e5 + p.C_L * e6 * e6)


def pv_duty(state, refs: RefSet, d1: float, d1_rate: float, gains: BackstepGains,
            params: SpvdgParams, cross_terms: bool = True, eps: float = DEN_EPS) -> float:
    """Unsaturated PV converter duty.

    ``d1`` is the PV current the law believes in (measured or estimated) and
    ``d1_rate`` its time derivative.
    """
    x1, x2, x3, _, _, x6 = state
    p = params
    e1 = x1 - refs.x1ref
    e2 = x2 - refs.x2ref
    e3 = x3 - (d1 + gains.K1 * e1)
    alpha3_rate = gains.K1 * (d1 - x3) / p.C_pvi + d1_rate
    num = (e2 * (x3 + (x6 - x2) / p.R_pvo)
           + e3 * (x1 - x2 - p.R_pv * x3 - p.L_pv * alpha3_rate))
    if cross_terms:
        num -= e1 * e3
    den = e3 * x2 - e2 * x3
    if not abs(den) >= eps:
        raise DegenerateDenominator(1, den)
    return (-num - gains.K2 * e2 * e2 - gains.K3 * e3 * e3) / den


def battery_duty(state, refs: RefSet, d2: float, d3: float, d3_rate: float, u1: float,
                 gains: BackstepGains, params: SpvdgParams, cross_terms: bool = True,
                 eps: float = DEN_EPS) -> float:
    """Unsaturated battery converter duty given the PV duty ``u1`` already chosen
    (the x2 rate inside the alpha5 derivative depends on it)."""
    x1, x2, x3, x4, x5, x6 = state
    p = params
    e6 = x6 - refs.x6ref
    e4 = x4 - refs.x4ref
    g = 1.0 / p.R_pvo + 1.0 / p.R_bo + d3
    alpha5 = -p.R_bo / p.R_pvo * x2 + p.R_bo * x6 * g - gains.K6 * e6 * p.R_bo
    e5 = x5 - alpha5
    x2_rate = (x3 - (x2 - x6) / p.R_pvo - x3 * u1) / p.C_pvo
    x6_rate = ((x2 - x6) / p.R_pvo + (x5 - x6) / p.R_bo - x6 * d3) / p.C_L
    alpha5_rate = (-p.R_bo / p.R_pvo * x2_rate + p.R_bo * x6 * d3_rate
                   + x6_rate * (-gains.K6 * p.R_bo + p.R_bo / p.R_pvo + 1.0 + p.R_bo * d3))
    num = (e5 * (x4 + (x6 - x5) / p.R_bo - p.C_bo * alpha5_rate)
           + e4 * (d2 - x5 - p.R_b * x4))
    if cross_terms:
        num += e5 * e6 / p.R_bo
    den = e4 * x5 - e5 * x4
    if not abs(den) >= eps:
        raise DegenerateDenominator(2, den)
    return (-num - gains.K4 * e4 * e4 - gains.K5 * e5 * e5) / den


def _sat(u: float) -> float:
    return 0.0 if u < 0.0 else 1.0 if u > 1.0 else u


def backstep_control(state, refs: RefSet, d, gains: BackstepGains, params: SpvdgParams,
                     d_rates: tuple[float, float] = (0.0, 0.0),
                     cross_terms: bool = True) -> tuple[float, float]:
    """Saturated duties (u1, u2) with the disturbances known.

    ``d_rates`` are the time derivatives of (d1, d3); zero means the
    disturbances are treated as piecewise constant.

    Raises
    ------
    DegenerateDenominator
        If either law's denominator is below the guard.
    """
    d1, d2, d3 = d
    u1 = _sat(pv_duty(state, refs, d1, d_rates[0], gains, params, cross_terms))
    u2 = _sat(battery_duty(state, refs, d2, d3, d_rates[1], u1, gains, params, cross_terms))
    return u1, u2


def observer_rates(state, refs: RefSet, obs: ObserverState, gains: BackstepGains,
                   ogains: ObserverGains) -> ObserverState:
    """Update rates of the three disturbance estimates."""
    x1, _, _, x4, _, x6 = state
    return ObserverState(ogains.rho1 * (x1 - refs.x1ref),
                         ogains.rho2 * (x4 - refs.x4ref),
                         -ogains.rho3 * x6 * (x6 - refs.x6ref))


def dob_backstep_control(state, refs: RefSet, obs: ObserverState, gains: BackstepGains,
                         ogains: ObserverGains, params: SpvdgParams,
                         cross_terms: bool = True) -> tuple[float, float, ObserverState]:
    """Back-stepping duties with the disturbances replaced by their estimates.

    Returns ``(u1, u2, obs_rates)``; the d1 and d3 estimate rates feed the
    virtual-control derivatives.
    """
    rates = observer_rates(state, refs, obs, gains, ogains)
    u1 = _sat(pv_duty(state, refs, obs.d1hat, rates.d1hat, gains, params, cross_terms))
    u2 = _sat(battery_duty(state, refs, obs.d2hat, obs.d3hat, rates.d3hat, u1,
                           gains, params, cross_terms))
    return u1, u2, rates


class BackstepController:
    """Stateful wrapper holding the previous duty on a guard trip.

    With ``ogains`` set the disturbances are estimated instead of measured;
    the estimates themselves are integrated by the caller (they are part of
    the simulated state) and passed in on every call.

    After each call ``guarded`` and ``saturated`` report whether the exact
    Lyapunov decrease law was unavailable on that tick.
    """

    def __init__(self, params: SpvdgParams, gains: BackstepGains, refs: RefSet,
                 ogains: ObserverGains | None = None, cross_terms: bool = True,
                 eps: float = DEN_EPS):
        self.params = params
        self.gains = gains
        self.ogains = ogains
        self.cross_terms = cross_terms
        self.eps = eps
        self.refs = refs
        self.u_prev = (refs.u1ss, refs.u2ss)
        self.guarded = False
        self.saturated = False

    def set_refs(self, refs: RefSet):
        self.refs = refs

    def __call__(self, state, d, d_rates=(0.0, 0.0)) -> tuple[float, float]:
        """Duties for ``state``; ``d`` is the true disturbance triple for the
        measured variant and the estimate triple for the observer variant."""
        d1, d2, d3 = d
        if self.ogains is not None:
            rates = observer_rates(state, self.refs, ObserverState(d1, d2, d3),
                                   self.gains, self.ogains)
            d_rates = (rates.d1hat, rates.d3hat)
        guarded = saturated = False
        try:
            raw1 = pv_duty(state, self.refs, d1, d_rates[0], self.gains, self.params,
                           self.cross_terms, self.eps)
            u1 = _sat(raw1)
            saturated |= u1 != raw1
        except DegenerateDenominator:
            u1 = self.u_prev[0]
            guarded = True
        try:
            raw2 = battery_duty(state, self.refs, d2, d3, d_rates[1], u1, self.gains,
                                self.params, self.cross_terms, self.eps)
            u2 = _sat(raw2)
            saturated |= u2 != raw2
        except DegenerateDenominator:
            u2 = self.u_prev[1]
            guarded = True
        self.u_prev = (u1, u2)
        self.guarded = guarded
        self.saturated = saturated
        return u1, u2
