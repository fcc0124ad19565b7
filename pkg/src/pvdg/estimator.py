"""Newton-Raphson recovery of cell temperature and irradiance.

Two measured (v, i) points on one I-V curve pin down the pair (T, lambda):
the model current at each measured voltage is matched to the measurement.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NoConvergence, SingularJacobian
from .pvmodel import (RESIDUAL_TOL, Environment, OperatingPoint, PvArrayParams, iv_curve,
                      pv_current_sensitivities)

DET_MIN = 1e-12
MAX_HALVINGS = 20
MAX_DT = 50.0  # K per step; keeps iterates out of regions where J degenerates


@dataclass(frozen=True)
class MeasurementPair:
    p1: OperatingPoint
    p2: OperatingPoint

    @property
    def distinct(self) -> bool:
        return self.p1.v != self.p2.v or self.p1.i != self.p2.i


@dataclass(frozen=True)
class EstimatorConfig:
    delta_t: float = 0.05
    max_iters: int = 20
    tol_T: float = 1e-6
    tol_lambda: float = 1e-4
    min_change: float = 0.02

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.tol_T > 0 and self.tol_lambda > 0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class EstimatorState:
    T: float
    lam: float
    iterations_used: int = 0

    @property
    def env(self) -> Environment:
        return Environment(self.T, self.lam)


def model_residuals(params: PvArrayParams, state: EstimatorState,
                    pair: MeasurementPair) -> tuple[float, float]:
    """Measured minus model current at both measured voltages."""
    curve = iv_curve(params, state.env)
    return (pair.p1.i - curve.current(pair.p1.v),
            pair.p2.i - curve.current(pair.p2.v))


def jacobian(params: PvArrayParams, state: EstimatorState, pair: MeasurementPair):
    """Rows of current sensitivities at the two measured voltages, evaluated on the
    curve of the current estimate, plus the model currents themselves."""
    env = state.env
    curve = iv_curve(params, env)
    i1k = curve.current(pair.p1.v)
    i2k = curve.current(pair.p2.v)
    r1 = pv_current_sensitivities(params, env, OperatingPoint(pair.p1.v, i1k))
    r2 = pv_current_sensitivities(params, env, OperatingPoint(pair.p2.v, i2k))
    return (r1, r2), (i1k, i2k)


def nr_step(params: PvArrayParams, state: EstimatorState,
            pair: MeasurementPair) -> EstimatorState:
    """One damped Newton-Raphson update of (T, lambda).

    The full step is halved until the iterate is feasible (T > 0, lambda >= 0)
    and the current mismatch norm does not grow.  The same backtracking
    is run with lambda re-fitted to the first point at each trial temperature,
    and whichever accepted candidate matches better is returned.
    """
    ((a, b), (c, d)), (i1k, i2k) = jacobian(params, state, pair)
    det = a * d - b * c
    if not abs(det) >= DET_MIN:
        raise SingularJacobian(f"|det J| = {abs(det):.3e}")
    r1 = pair.p1.i - i1k
    r2 = pair.p2.i - i2k
    norm0 = r1 * r1 + r2 * r2
    dT = (d * r1 - b * r2) / det
    dlam = (a * r2 - c * r1) / det
    if norm0 == 0.0:
        return EstimatorState(state.T, state.lam, state.iterations_used + 1)
    if abs(dT) > MAX_DT:
        dT, dlam = dT * MAX_DT / abs(dT), dlam * MAX_DT / abs(dT)
    n = state.iterations_used + 1
    plain = fitted = None
    for _ in range(MAX_HALVINGS + 1):
        T = state.T + dT
        lam = state.lam + dlam
        if plain is None and T > 0 and lam >= 0:
            trial = EstimatorState(T, lam, n)
            norm = _norm(params, trial, pair)
            if norm <= norm0:
                plain = (norm, trial)
        if fitted is None:
            trial = _on_first_point(params, T, pair, n)
            if trial is not None:
                norm = _norm(params, trial, pair)
                if norm <= norm0:
                    fitted = (norm, trial)
        if plain is not None and fitted is not None:
            break
        dT *= 0.5
        dlam *= 0.5
    found = [c for c in (plain, fitted) if c is not None]
    if not found:
        raise NoConvergence("no feasible step reduced the current mismatch")
    return min(found, key=lambda c: c[0])[1]


def _norm(params, state, pair) -> float:
    r1, r2 = model_residuals(params, state, pair)
    return r1 * r1 + r2 * r2


def _on_first_point(params, T, pair, iterations) -> EstimatorState | None:
    """Temperature ``T`` with lambda solved so the first point lies exactly on the curve.

    Current is affine in lambda through the photocurrent, so this is one
    division.  At low voltages the two points barely separate T from lambda
    and the plain step overshoots along that valley; this candidate stays on
    its floor.
    """
    if not T > 0:
        return None
    curve = iv_curve(params, Environment(T, 1000.0))
    if not curve.ig > 0:
        return None
    lam = 1000.0 * (curve.ig - curve.residual(pair.p1.v, pair.p1.i)) / curve.ig
    if not lam >= 0:
        return None
    return EstimatorState(T, lam, iterations)


def estimate(params: PvArrayParams, pair: MeasurementPair, init: EstimatorState,
             cfg: EstimatorConfig = EstimatorConfig()) -> EstimatorState:
    """Iterate :func:`nr_step` until both updates fall under tolerance.

    If the cap is reached, or no step can shrink the mismatch, while both model
    currents already match the measurements within the I-V solve tolerance,
    the estimate is returned instead of raising.  ``iterations_used`` of the
    result counts the steps taken in this call.
    """
    state = EstimatorState(init.T, init.lam, 0)
    for _ in range(cfg.max_iters):
        try:
            new = nr_step(params, state, pair)
        except NoConvergence:
            # no step can shrink a mismatch that is already at the solver's noise floor
            if _settled(params, state, pair):
                return state
            raise
        done = abs(new.T - state.T) <= cfg.tol_T and abs(new.lam - state.lam) <= cfg.tol_lambda
        state = new
        if done:
            return state
    # badly conditioned pairs can wander below tol_T while already matching both points
    if _settled(params, state, pair):
        return state
    raise NoConvergence(f"no convergence in {cfg.max_iters} iterations "
                        f"(last estimate T={state.T:.4g} K, lambda={state.lam:.4g} W/m2)")


def _settled(params: PvArrayParams, state: EstimatorState, pair: MeasurementPair) -> bool:
    r1, r2 = model_residuals(params, state, pair)
    return max(abs(r1), abs(r2)) <= RESIDUAL_TOL


def should_reestimate(prev: OperatingPoint, current: OperatingPoint, min_change: float) -> bool:
    """True when the PV voltage or current moved by more than ``min_change`` (relative)."""

    def rel(a, b):
        scale = abs(a)
        if scale == 0.0:
            return 0.0 if b == a else float("inf")
        return abs(b - a) / scale

    return rel(prev.v, current.v) > min_change or rel(prev.i, current.i) > min_change
