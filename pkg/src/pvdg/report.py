"""Per-scenario metrics computed from a finished trace.

Each ``*_report`` returns plain rows (dicts) so that tests can assert on them
and :func:`format_report` can print them.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NeverSettles
from .pvmodel import Environment, find_mpp
from .sim import Schedule, SystemParams, Trace, settling_time

# Desired MPP values for the four estimator cases: (T, lambda) -> (v, i, P).
CH2_DESIRED = {
    (298.0, 500.0): (14.4, 2.15, 31.0),
    (298.0, 1000.0): (14.6, 4.40, 64.2),
    (323.0, 1000.0): (12.7, 4.52, 57.5),
    (323.0, 500.0): (12.3, 2.26, 28.5),
}

STEADY_WINDOW = 0.05   # tail of each segment used for steady-state values
STATE_BAND = 0.02
# half-width floors for states near zero: volts for x1, x2, x5, x6; amps for x3, x4
STATE_FLOOR = {"x1": 0.2, "x2": 0.2, "x3": 0.05, "x4": 0.05, "x5": 0.2, "x6": 0.2}
OBS_FLOOR = {"d1hat": 0.05, "d2hat": 0.2, "d3hat": 0.002}


def segments(trace: Trace) -> list[tuple[float, float]]:
    """``(start, end)`` of each interval between schedule events."""
    edges = [float(trace.t[0])] + [e for e in trace.events if trace.t[0] < e < trace.t[-1]]
    ends = edges[1:] + [float(trace.t[-1]) + trace.sample_dt]
    return list(zip(edges, ends))


def _tail(trace: Trace, name: str, end: float, width: float = STEADY_WINDOW) -> np.ndarray:
    m = (trace.t >= end - width - 1e-12) & (trace.t < end - 1e-12)
    return trace.series(name)[m]


def _settle(trace, name, target, band, start, end, floor=0.0):
    try:
        return settling_time(trace, name, target, band, start, end, abs_tol=floor)
    except NeverSettles:
        return math.inf


def backstep_report(trace: Trace, schedule: Schedule, sp: SystemParams) -> list[dict]:
    """Per-segment settling and steady-state figures for the six-state microgrid."""
    observe = not np.all(np.isnan(trace.dhat))
    rows = []
    for start, end in segments(trace):
        refs = trace.refs_at(start)
        x1_end = float(np.mean(_tail(trace, "x1", end)))
        row = {
            "start": start,
            "event": bool(start > trace.t[0]),
            "x6_settle": _settle(trace, "x6", sp.v_dc, 0.01, start, end),
            "x1_ref": refs.x1ref,
            "x1_err_pct": 100.0 * (x1_end - refs.x1ref) / refs.x1ref,
            "x6_end": float(np.mean(_tail(trace, "x6", end))),
            "x4_end": float(np.mean(_tail(trace, "x4", end))),
            "P_pv": float(np.mean(_tail(trace, "P_pv", end))),
            "P_load": float(np.mean(_tail(trace, "P_load", end))),
            "P_loss": float(np.mean(trace.p_loss[(trace.t >= end - STEADY_WINDOW)
                                                 & (trace.t < end - 1e-12)])),
        }
        state_settle = 0.0
        for name, floor in STATE_FLOOR.items():
            final = float(trace.series(name)[trace.t < end - 1e-12][-1])
            state_settle = max(state_settle, _settle(trace, name, final, STATE_BAND,
                                                     start, end, floor))
        row["states_settle"] = state_settle
        if observe:
            obs_settle = 0.0
            for name, floor in OBS_FLOOR.items():
                final = float(trace.series(name)[trace.t < end - 1e-12][-1])
                obs_settle = max(obs_settle, _settle(trace, name, final, STATE_BAND,
                                                     start, end, floor))
            row["observers_settle"] = obs_settle
            for k in (1, 2, 3):
                est = float(np.mean(_tail(trace, f"d{k}hat", end)))
                true = float(np.mean(_tail(trace, f"d{k}", end)))
                row[f"d{k}hat_err_pct"] = 100.0 * (est - true) / true
        rows.append(row)
    return rows


def pi_report(trace: Trace, schedule: Schedule, sp: SystemParams) -> list[dict]:
    """Bus voltage and battery current over the second half of each segment."""
    rows = []
    for start, end in segments(trace):
        m = (trace.t >= 0.5 * (start + end)) & (trace.t < end - 1e-12)
        x6 = trace.series("x6")[m]
        T, lam = schedule.at(start)[:2]
        mpp = find_mpp(sp.pv, Environment(T, lam))
        rows.append({
            "start": start,
            "x6_mean": float(np.mean(x6)),
            "x6_min": float(np.min(x6)),
            "x6_max": float(np.max(x6)),
            "x4_mean": float(np.mean(trace.series("x4")[m])),
            "P_pv": float(np.mean(trace.p_pv[m])),
            "P_mpp": mpp.power,
            "P_load": float(np.mean(trace.p_load[m])),
        })
    return rows


def estimate_report(trace: Trace, schedule: Schedule, sp: SystemParams) -> list[dict]:
    """Last clean estimate in each segment against the truth, plus the MPP it implies."""
    rows = []
    for start, end in segments(trace):
        good = [e for e in trace.estimates
                if start < e.t < end and e.status == "ok" and not e.straddles_event]
        T, lam = schedule.at(start)[:2]
        mpp = find_mpp(sp.pv, Environment(T, lam))
        row = {"start": start, "T": T, "lam": lam, "v_mpp": mpp.v, "i_mpp": mpp.i,
               "P_mpp": mpp.power, "P_pv": float(np.mean(_tail(trace, "P_pv", end, 0.1)))}
        if good:
            e = good[-1]
            row.update(T_hat=e.T_hat, lam_hat=e.lam_hat,
                       T_err_pct=100.0 * (e.T_hat - T) / T,
                       lam_err_pct=100.0 * (e.lam_hat - lam) / lam, iterations=e.iterations)
        desired = CH2_DESIRED.get((T, lam))
        if desired:
            row.update(v_des=desired[0], i_des=desired[1], P_des=desired[2])
        rows.append(row)
    return rows


def mppt_report(trace: Trace, schedule: Schedule, sp: SystemParams) -> list[dict]:
    """PV operating point against the true MPP at the end of each segment."""
    rows = []
    for start, end in segments(trace):
        T, lam = schedule.at(start)[:2]
        mpp = find_mpp(sp.pv, Environment(T, lam))
        v = float(np.mean(_tail(trace, "x1", end, 0.1)))
        p = float(np.mean(_tail(trace, "P_pv", end, 0.1)))
        rows.append({"start": start, "v_pv": v, "v_mpp": mpp.v, "P_pv": p, "P_mpp": mpp.power,
                     "efficiency_pct": 100.0 * p / mpp.power,
                     "x6_end": float(np.mean(_tail(trace, "x6", end, 0.1)))})
    return rows


REPORTS = {"backstep": backstep_report, "pi": pi_report, "estimate": estimate_report,
           "mppt": mppt_report}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        if math.isinf(v):
            return "never"
        return f"{v:.6g}"
    return str(v)


def format_report(kind: str, rows: list[dict]) -> str:
    """Fixed-width text table, one row per segment."""
    if not rows:
        return ""
    cols = list(dict.fromkeys(k for r in rows for k in r))
    cells = [[_fmt(r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[j]) for row in cells)) for j, c in enumerate(cols)]
    lines = [f"[{kind}]", "  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(x.rjust(w) for x, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def build_report(kind: str, trace: Trace, schedule: Schedule, sp: SystemParams) -> list[dict]:
    return REPORTS[kind](trace, schedule, sp)
