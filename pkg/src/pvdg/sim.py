"""Fixed-step closed-loop simulation of the microgrid and the PV boost stage.

The plant is advanced with classical RK4 at a fixed step; controller outputs
are held over each step.  The PV current is always recomputed from the
single-diode model at the present PV voltage (the array is part of the plant),
unless ``SimConfig.constant_d1`` asks for the textbook constant-disturbance
reading.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .control.backstep import DEN_EPS
from .control import (BackstepController, BackstepGains, ObserverGains, PerturbState,
                      PiGains, PiState, dual_loop_pi, perturb_step)
from .errors import (InfeasibleOperatingPoint, InfeasibleReferences, NeverSettles, NoBracket,
                     NoConvergence, NonFinite, SingularJacobian)
from .estimator import (EstimatorConfig, EstimatorState, MeasurementPair, estimate,
                        should_reestimate)
from .plant import (BoostParams, RefSet, SpvdgParams, boost_derivatives, boost_steady_refs,
                    generate_references, spvdg_derivatives)
from .pvmodel import (CH2_ARRAY, KC200GT, Environment, OperatingPoint, PvArrayParams,
                      find_mpp, iv_curve)

CONTROLLERS = ("backstep", "dob-backstep", "pi-perturb", "feedforward-mppt")
DOB_REF_MODES = ("secondary", "event", "continuous")

Segments = tuple[tuple[float, float], ...]


def _check_segments(name: str, segs: Segments):
    if not segs:
        raise ValueError(f"{name} schedule is empty")
    if segs[0][0] != 0.0:
        raise ValueError(f"{name} schedule must start at t = 0")
    times = [s[0] for s in segs]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"{name} segment times must be strictly increasing")
    for _, v in segs:
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{name} values must be positive, got {v}")


def _value_at(segs: Segments, t: float) -> float:
    idx = bisect.bisect_right([s[0] for s in segs], t) - 1
    return segs[max(idx, 0)][1]


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant environment and load, as ``(start_time, value)`` segments."""

    temperature: Segments = ((0.0, 298.0),)
    irradiance: Segments = ((0.0, 1000.0),)
    load: Segments = ((0.0, 8.0),)

    def __post_init__(self):
        for name in ("temperature", "irradiance", "load"):
            segs = tuple((float(a), float(b)) for a, b in getattr(self, name))
            object.__setattr__(self, name, segs)
            _check_segments(name, segs)

    @classmethod
    def constant(cls, T: float = 298.0, lam: float = 1000.0, R_L: float = 8.0) -> "Schedule":
        return cls(((0.0, T),), ((0.0, lam),), ((0.0, R_L),))

    def at(self, t: float) -> tuple[float, float, float]:
        """(T, lambda, R_L) in force at time ``t``."""
        return (_value_at(self.temperature, t), _value_at(self.irradiance, t),
                _value_at(self.load, t))

    def events(self) -> tuple[float, ...]:
        """Sorted instants (> 0) at which anything changes."""
        ts = {s[0] for segs in (self.temperature, self.irradiance, self.load) for s in segs}
        ts.discard(0.0)
        return tuple(sorted(ts))


@dataclass(frozen=True)
class SystemParams:
    """Everything physical or controller-related a scenario needs.

    Fields irrelevant to the selected controller are ignored.
    """

    pv: PvArrayParams = KC200GT
    plant: SpvdgParams = SpvdgParams()
    v_dc: float = 40.0
    v_batt: float = 24.0
    gains: BackstepGains = BackstepGains()
    observer: ObserverGains = ObserverGains()
    obs_init_scale: float = 1.0
    pi: PiGains = PiGains()
    delD: float = 0.005
    perturb_period: float = 0.05
    boost: BoostParams = BoostParams()
    estimator: EstimatorConfig = EstimatorConfig()
    sample_offset: float = 0.025
    dither: float = 0.005


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-5
    duration: float = 7.5
    controller: str = "backstep"
    record_stride: int = 10
    constant_d1: bool = False
    cross_terms: bool = True
    dob_refs: str = "continuous"
    den_eps: float = DEN_EPS
    control_period: float = 0.0  # back-stepping update interval; 0 means every step

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}; pick one of {CONTROLLERS}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")
        if self.dob_refs not in DOB_REF_MODES:
            raise ValueError(f"dob_refs must be one of {DOB_REF_MODES}")
        if self.control_period:
            ratio = self.control_period / self.dt
            if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-6:
                raise ValueError("control_period must be a whole multiple of dt")

    @property
    def control_every(self) -> int:
        """Integration steps per back-stepping update."""
        return max(1, int(round(self.control_period / self.dt))) if self.control_period else 1


@dataclass(frozen=True)
class EstimateRecord:
    t: float
    T_true: float
    lam_true: float
    T_hat: float
    lam_hat: float
    iterations: int
    straddles_event: bool
    status: str


_SERIES = ("x1", "x2", "x3", "x4", "x5", "x6", "u1", "u2", "d1", "d2", "d3",
           "d1hat", "d2hat", "d3hat", "P_pv", "P_batt", "P_load", "P_loss")


@dataclass
class Trace:
    """Uniformly sampled simulation record.

    ``x`` holds the six microgrid states; for the boost stage the columns
    x1, x3, x6 carry PV voltage, inductor current and output voltage and the
    rest are NaN.  Absent quantities (no observer, no battery) are NaN.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    d: np.ndarray
    dhat: np.ndarray
    p_pv: np.ndarray
    p_batt: np.ndarray
    p_load: np.ndarray
    p_loss: np.ndarray
    guarded: np.ndarray
    saturated: np.ndarray
    events: tuple[float, ...] = ()
    refs: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    controller: str = ""
    sample_dt: float = 0.0

    @classmethod
    def from_series(cls, t, **columns) -> "Trace":
        """Build a trace from named columns (``x6=...``, ``d3hat=...``); the rest are NaN."""
        t = np.asarray(t, dtype=float)
        n = len(t)
        nan = lambda k: np.full((n, k), np.nan)  # noqa: E731
        tr = cls(t=t, x=nan(6), u=nan(2), d=nan(3), dhat=nan(3), p_pv=nan(1)[:, 0],
                 p_batt=nan(1)[:, 0], p_load=nan(1)[:, 0], p_loss=nan(1)[:, 0],
                 guarded=np.zeros(n, bool), saturated=np.zeros(n, bool),
                 sample_dt=float(t[1] - t[0]) if n > 1 else 0.0)
        for name, values in columns.items():
            tr._column(name)[:] = values
        return tr

    def _column(self, name: str) -> np.ndarray:
        if name not in _SERIES:
            raise KeyError(f"unknown series {name!r}")
        if name[0] == "x":
            return self.x[:, int(name[1]) - 1]
        if name[0] == "u":
            return self.u[:, int(name[1]) - 1]
        if name.endswith("hat"):
            return self.dhat[:, int(name[1]) - 1]
        if name[0] == "d":
            return self.d[:, int(name[1]) - 1]
        return {"P_pv": self.p_pv, "P_batt": self.p_batt, "P_load": self.p_load,
                "P_loss": self.p_loss}[name]

    def series(self, name: str) -> np.ndarray:
        return self._column(name)

    def index_at(self, t: float) -> int:
        return int(np.argmin(np.abs(self.t - t)))

    def refs_at(self, t: float) -> RefSet | None:
        """Reference set in force at time ``t`` (the last one issued at or before it)."""
        best = None
        for ts, r in self.refs:
            if ts <= t + 1e-12:
                best = r
        return best

    def __len__(self):
        return len(self.t)


def rk4_step(f, x, dt: float) -> tuple[float, ...]:
    """One classical Runge-Kutta step of ``x' = f(x)``; inputs are frozen over the step.

    ``f`` maps a sequence of floats to a sequence of rates.  Returns a tuple.

    Raises
    ------
    NonFinite
        If any component of the new state is NaN or infinite.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    h = 0.5 * dt
    k1 = f(x)
    k2 = f([a + h * b for a, b in zip(x, k1)])
    k3 = f([a + h * b for a, b in zip(x, k2)])
    k4 = f([a + dt * b for a, b in zip(x, k3)])
    s = dt / 6.0
    out = tuple(a + s * (b + 2.0 * c + 2.0 * d + e)
                for a, b, c, d, e in zip(x, k1, k2, k3, k4))
    if not math.isfinite(math.fsum(out)) or not all(math.isfinite(v) for v in out):
        raise NonFinite("state became non-finite")
    return out


class _Recorder:
    def __init__(self, n: int):
        self.t = np.empty(n)
        self.x = np.full((n, 6), np.nan)
        self.u = np.full((n, 2), np.nan)
        self.d = np.full((n, 3), np.nan)
        self.dhat = np.full((n, 3), np.nan)
        self.p = np.full((n, 4), np.nan)
        self.guarded = np.zeros(n, bool)
        self.saturated = np.zeros(n, bool)
        self.i = 0

    def trace(self, **kw) -> Trace:
        n = self.i
        return Trace(t=self.t[:n], x=self.x[:n], u=self.u[:n], d=self.d[:n],
                     dhat=self.dhat[:n], p_pv=self.p[:n, 0], p_batt=self.p[:n, 1],
                     p_load=self.p[:n, 2], p_loss=self.p[:n, 3], guarded=self.guarded[:n],
                     saturated=self.saturated[:n], **kw)


def _check_duties(u1: float, u2: float, t: float):
    if not (math.isfinite(u1) and math.isfinite(u2)):
        raise NonFinite("controller produced a non-finite duty", t=t)
    if not (0.0 <= u1 <= 1.0 and 0.0 <= u2 <= 1.0):
        raise AssertionError(f"duty outside [0, 1] at t = {t:.6g} s: ({u1}, {u2})")


def _spvdg_losses(p: SpvdgParams, x) -> float:
    x1, x2, x3, x4, x5, x6 = x
    return (p.R_pv * x3 * x3 + p.R_b * x4 * x4
            + (x2 - x6) ** 2 / p.R_pvo + (x5 - x6) ** 2 / p.R_bo)


def _event_steps(schedule: Schedule, dt: float, n_steps: int) -> dict[int, float]:
    out = {}
    for te in schedule.events():
        k = int(round(te / dt))
        if 0 < k <= n_steps:
            out[k] = te
    return out


def _microgrid_refs(sp: SystemParams, env: Environment, d2: float, d3: float):
    mpp = find_mpp(sp.pv, env)
    return mpp, generate_references(sp.plant, sp.v_dc, mpp, d2, d3)


def run_scenario(schedule: Schedule, params: SystemParams, cfg: SimConfig) -> Trace:
    """Simulate ``schedule`` with the controller selected in ``cfg``.

    Raises
    ------
    NonFinite
        With the simulated time at which the state blew up.
    """
    if cfg.controller in ("backstep", "dob-backstep"):
        return _run_backstep(schedule, params, cfg)
    if cfg.controller == "pi-perturb":
        return _run_pi_perturb(schedule, params, cfg)
    return _run_feedforward(schedule, params, cfg)


def _run_backstep(schedule: Schedule, sp: SystemParams, cfg: SimConfig) -> Trace:
    P = sp.plant
    dt = cfg.dt
    d2 = sp.v_batt
    observe = cfg.controller == "dob-backstep"
    n_steps = int(round(cfg.duration / dt))
    events = _event_steps(schedule, dt, n_steps)
    stride = cfg.record_stride
    every = cfg.control_every
    rec = _Recorder(n_steps // stride + 1)

    T, lam, R = schedule.at(0.0)
    env = Environment(T, lam)
    d3 = 1.0 / R
    mpp, true_refs = _microgrid_refs(sp, env, d2, d3)
    curve = iv_curve(sp.pv, env)
    x = tuple(true_refs.state)
    d1_const = mpp.i

    if observe:
        s = sp.obs_init_scale
        obs = (mpp.i * s, d2 * s, d3 * s)
        refs = true_refs if cfg.dob_refs == "secondary" else _dob_refs(sp, mpp, obs, true_refs)
    else:
        obs = None
        refs = true_refs
    ctl = BackstepController(P, sp.gains, refs, sp.observer if observe else None,
                             cfg.cross_terms, cfg.den_eps)
    ctl.u_prev = (true_refs.u1ss, true_refs.u2ss)
    ref_log = [(0.0, refs)]
    guess = [x[2]]

    def pv_i(v):
        if cfg.constant_d1:
            return d1_const
        i = curve.current(v, guess[0])
        guess[0] = i
        return i

    for k in range(n_steps + 1):
        t = k * dt
        if k in events:
            T, lam, R = schedule.at(events[k])
            env = Environment(T, lam)
            d3 = 1.0 / R
            curve = iv_curve(sp.pv, env)
            if observe and cfg.dob_refs != "secondary":
                mpp = find_mpp(sp.pv, env)
                refs = _dob_refs(sp, mpp, obs, refs)
            else:
                mpp, refs = _microgrid_refs(sp, env, d2, d3)
            d1_const = mpp.i
            ctl.set_refs(refs)
            ref_log.append((t, refs))

        d1 = pv_i(x[0])
        if k % every == 0:
            if observe:
                if cfg.dob_refs == "continuous":
                    refs = _dob_refs(sp, mpp, obs, refs)
                    ctl.set_refs(refs)
                u1, u2 = ctl(x[:6], obs)
            else:
                u1, u2 = ctl(x, (d1, d2, d3))
            _check_duties(u1, u2, t)

        if k % stride == 0:
            i = rec.i
            rec.t[i] = t
            rec.x[i] = x[:6]
            rec.u[i] = (u1, u2)
            rec.d[i] = (d1, d2, d3)
            if observe:
                rec.dhat[i] = obs
            rec.p[i] = (x[0] * d1, d2 * x[3], x[5] * x[5] * d3, _spvdg_losses(P, x[:6]))
            rec.guarded[i] = ctl.guarded
            rec.saturated[i] = ctl.saturated
            rec.i += 1
        if k == n_steps:
            break

        if observe:
            og = sp.observer
            r1, r4, r6 = refs.x1ref, refs.x4ref, refs.x6ref

            def f(y, u1=u1, u2=u2):
                dx = spvdg_derivatives(P, y[:6], (pv_i(y[0]), d2, d3), u1, u2)
                return (*dx, og.rho1 * (y[0] - r1), og.rho2 * (y[3] - r4),
                        -og.rho3 * y[5] * (y[5] - r6))
        else:
            def f(y, u1=u1, u2=u2):
                return spvdg_derivatives(P, y, (pv_i(y[0]), d2, d3), u1, u2)

        try:
            x = rk4_step(f, x + obs if observe else x, dt)
        except (NonFinite, NoBracket) as exc:
            raise NonFinite(f"state diverged ({exc})", t=t + dt) from exc
        if observe:
            x, obs = x[:6], x[6:]

    return rec.trace(events=tuple(events.values()), refs=ref_log, controller=cfg.controller,
                     sample_dt=dt * stride)


def _dob_refs(sp: SystemParams, mpp: OperatingPoint, obs, fallback: RefSet) -> RefSet:
    """References rebuilt from the observer's battery-voltage and load estimates.

    An estimate pair that admits no equilibrium keeps the previous references.
    """
    try:
        return generate_references(sp.plant, sp.v_dc, mpp, obs[1], obs[2])
    except InfeasibleReferences:
        return fallback


def _run_pi_perturb(schedule: Schedule, sp: SystemParams, cfg: SimConfig) -> Trace:
    P = sp.plant
    dt = cfg.dt
    d2 = sp.v_batt
    n_steps = int(round(cfg.duration / dt))
    events = _event_steps(schedule, dt, n_steps)
    stride = cfg.record_stride
    rec = _Recorder(n_steps // stride + 1)
    pi_every = max(1, int(round(sp.pi.period / dt)))

    T, lam, R = schedule.at(0.0)
    env = Environment(T, lam)
    d3 = 1.0 / R
    mpp, refs0 = _microgrid_refs(sp, env, d2, d3)
    curve = iv_curve(sp.pv, env)
    x = tuple(refs0.state)
    # bumpless start: integrators preloaded with the equilibrium current and duty
    pi_state = PiState(v_sum=refs0.x4ref / sp.pi.Ki_v, i_sum=refs0.u2ss / sp.pi.Ki_i)
    pert = PerturbState.start(refs0.u1ss, sp.delD, sp.perturb_period, D_b=refs0.u2ss)
    u1, u2 = refs0.u1ss, refs0.u2ss
    guess = [x[2]]

    def pv_i(v):
        i = curve.current(v, guess[0])
        guess[0] = i
        return i

    for k in range(n_steps + 1):
        t = k * dt
        if k in events:
            T, lam, R = schedule.at(events[k])
            env = Environment(T, lam)
            d3 = 1.0 / R
            curve = iv_curve(sp.pv, env)
        if k % pi_every == 0:
            out = dual_loop_pi(x[5], sp.v_dc, x[3], sp.pi, pi_state)
            pi_state = out.state
            # charge drives the plant with 1 - D_bp, which equals D_b here
            u2 = out.D_b if out.mode == "discharge" else 1.0 - out.D_bp
            mode = "buck" if out.mode == "charge" else "boost"
            pert, u1 = perturb_step(pert, t, mode, D_b=out.D_b, D_bp=out.D_bp)
        _check_duties(u1, u2, t)

        d1 = pv_i(x[0])
        if k % stride == 0:
            i = rec.i
            rec.t[i] = t
            rec.x[i] = x
            rec.u[i] = (u1, u2)
            rec.d[i] = (d1, d2, d3)
            rec.p[i] = (x[0] * d1, d2 * x[3], x[5] * x[5] * d3, _spvdg_losses(P, x))
            rec.i += 1
        if k == n_steps:
            break

        def f(y, u1=u1, u2=u2):
            return spvdg_derivatives(P, y, (pv_i(y[0]), d2, d3), u1, u2)

        try:
            x = rk4_step(f, x, dt)
        except (NonFinite, NoBracket) as exc:
            raise NonFinite(f"state diverged ({exc})", t=t + dt) from exc

    return rec.trace(events=tuple(events.values()), refs=[(0.0, refs0)],
                     controller=cfg.controller, sample_dt=dt * stride)


def _run_feedforward(schedule: Schedule, sp: SystemParams, cfg: SimConfig) -> Trace:
    """Boost stage driven by the model-based one-shot MPPT.

    Every ``estimator.delta_t`` the PV voltage and current are sampled.  The
    duty alternates by ``+-dither/2`` around its set value on successive
    samples, so consecutive samples are two distinct points on one I-V curve.
    When the operating point moves by more than ``min_change`` an estimate is
    requested; it stays pending, and the latest pair is inverted on every
    sample, until an estimate from a pair that does not straddle a schedule
    event reproduces the measured current.  Each successful estimate sets the
    duty to the steady value for the MPP of the estimated curve and the
    estimated load.
    """
    bp = sp.boost
    ecfg = sp.estimator
    dt = cfg.dt
    n_steps = int(round(cfg.duration / dt))
    events = _event_steps(schedule, dt, n_steps)
    event_times = sorted(events.values())
    stride = cfg.record_stride
    rec = _Recorder(n_steps // stride + 1)
    sample_every = max(1, int(round(ecfg.delta_t / dt)))
    first_sample = int(round(sp.sample_offset / dt))

    T, lam, R = schedule.at(0.0)
    env = Environment(T, lam)
    curve = iv_curve(sp.pv, env)
    bpar = replace(bp, R_ld=R)
    est = EstimatorState(sp.pv.T_r, sp.pv.lambda_r)
    u_set = _ff_duty(find_mpp(sp.pv, est.env), bpar)
    phase = 1.0
    u = _clip(u_set + 0.5 * sp.dither * phase)
    # cold start: output capacitor empty, array open-circuited
    x = (0.0, curve.open_circuit_voltage(), 0.0)
    guess = [0.0]
    prev_sample = None
    prev_sample_t = 0.0
    pending = True
    estimates: list[EstimateRecord] = []
    ref_log = []

    def pv_i(v):
        i = curve.current(v, guess[0])
        guess[0] = i
        return i

    for k in range(n_steps + 1):
        t = k * dt
        if k in events:
            T, lam, R = schedule.at(events[k])
            env = Environment(T, lam)
            curve = iv_curve(sp.pv, env)
            bpar = replace(bp, R_ld=R)

        i_pv = pv_i(x[1])
        if k >= first_sample and (k - first_sample) % sample_every == 0:
            sample = OperatingPoint(x[1], i_pv)
            if prev_sample is not None:
                pending |= should_reestimate(prev_sample, sample, ecfg.min_change)
            if pending and prev_sample is not None and MeasurementPair(prev_sample, sample).distinct:
                straddles = any(prev_sample_t < te <= t for te in event_times)
                status = "ok"
                try:
                    new = estimate(sp.pv, MeasurementPair(prev_sample, sample), est, ecfg)
                except (NoConvergence, SingularJacobian) as exc:
                    status = type(exc).__name__
                    new = est
                estimates.append(EstimateRecord(t, T, lam, new.T, new.lam, new.iterations_used,
                                                straddles, status))
                if status == "ok" and new.lam > 0:
                    est = EstimatorState(new.T, new.lam)
                    mpp = find_mpp(sp.pv, est.env)
                    # load from the output node: i_o = i_L (1 - u) - C_b dv_o/dt
                    dvo = boost_derivatives(bpar, x, i_pv, u)[2]
                    i_o = x[0] * (1.0 - u) - bp.C_b * dvo
                    R_hat = x[2] / i_o if i_o > 1e-9 and x[2] > 0 else bpar.R_ld
                    try:
                        u_set = _ff_duty(mpp, replace(bp, R_ld=R_hat))
                        ref_log.append((t, mpp))
                    except InfeasibleOperatingPoint:
                        pass
                    model_i = iv_curve(sp.pv, est.env).current(sample.v)
                    if not straddles and abs(model_i - sample.i) <= 1e-6 * max(1.0, abs(sample.i)):
                        pending = False
            prev_sample = sample
            prev_sample_t = t
            phase = -phase
            u = _clip(u_set + 0.5 * sp.dither * phase)
        _check_duties(u, 0.0, t)

        if k % stride == 0:
            i = rec.i
            rec.t[i] = t
            rec.x[i, 0], rec.x[i, 2], rec.x[i, 5] = x[1], x[0], x[2]
            rec.u[i, 0] = u
            rec.d[i, 0], rec.d[i, 2] = i_pv, 1.0 / bpar.R_ld
            rec.p[i] = (x[1] * i_pv, np.nan, x[2] * x[2] / bpar.R_ld,
                        bp.r * x[0] * x[0] + bp.V_D * x[0] * (1.0 - u))
            rec.i += 1
        if k == n_steps:
            break

        def f(y, u=u, bpar=bpar):
            return boost_derivatives(bpar, y, pv_i(y[1]), u)

        try:
            x = rk4_step(f, x, dt)
        except (NonFinite, NoBracket) as exc:
            raise NonFinite(f"state diverged ({exc})", t=t + dt) from exc

    return rec.trace(events=tuple(event_times), refs=ref_log, estimates=estimates,
                     controller=cfg.controller, sample_dt=dt * stride)


def _clip(u: float) -> float:
    return min(1.0, max(0.0, u))


def _ff_duty(mpp: OperatingPoint, bp: BoostParams) -> float:
    _, _, u_r = boost_steady_refs(mpp.v, mpp.i, bp)
    return _clip(u_r)


# -- metrics ------------------------------------------------------------------

def settling_time(trace: Trace, signal, target: float, band: float, start: float,
                  end: float | None = None, abs_tol: float = 0.0) -> float:
    """Time after ``start`` from which ``signal`` stays within ``band * |target|`` of ``target``.

    ``signal`` is a series name (``"x6"``, ``"d3hat"``, ...) or an array aligned
    with ``trace.t``.  The window closes at ``end``, defaulting to the next
    event after ``start`` or the end of the trace.  ``abs_tol`` is a floor on
    the half-width, for targets near zero.

    Raises
    ------
    NeverSettles
        If the signal is out of band at the end of the window.
    """
    s = trace.series(signal) if isinstance(signal, str) else np.asarray(signal, float)
    t = trace.t
    if not t[0] - 1e-12 <= start <= t[-1] + 1e-12:
        raise ValueError("start lies outside the trace")
    if end is None:
        later = [e for e in trace.events if e > start + 1e-12]
        end = later[0] if later else math.inf
    mask = (t >= start - 1e-12) & (t < end - 1e-12)
    idx = np.nonzero(mask)[0]
    if len(idx) == 0:
        raise ValueError("empty settling window")
    width = max(band * abs(target), abs_tol)
    out = ~(np.abs(s[idx] - target) <= width)
    if not out.any():
        return 0.0
    last = int(np.nonzero(out)[0][-1])
    if last == len(idx) - 1:
        raise NeverSettles(f"signal still outside the {band:.3g} band at t = {t[idx[-1]]:.6g} s")
    return float(t[idx[last + 1]] - start)


def power_balance(trace: Trace, t: float) -> float:
    """``P_pv + P_batt - P_load - P_loss`` at the sample nearest ``t`` (battery term
    omitted when the plant has none)."""
    i = trace.index_at(t)
    batt = trace.p_batt[i]
    batt = 0.0 if np.isnan(batt) else batt
    return float(trace.p_pv[i] + batt - trace.p_load[i] - trace.p_loss[i])


__all__ = [
    "CONTROLLERS", "EstimateRecord", "Schedule", "SimConfig", "SystemParams", "Trace",
    "power_balance", "rk4_step", "run_scenario", "settling_time", "CH2_ARRAY", "KC200GT",
]
