"""Dual-loop PI bus regulation and direct-perturbation MPPT.

The battery converter holds the bus with an outer voltage loop (producing a
battery current reference) and an inner current loop (producing the duty).
The PV converter duty is perturbed in fixed steps; the direction of the next
step is read off the battery converter's reaction to the previous one, so no
PV-side sensor is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple


@dataclass(frozen=True)
class PiGains:
    Kp_v: float = 0.2
    Ki_v: float = 0.1
    Kp_i: float = 0.2
    Ki_i: float = 0.01
    period: float = 2e-4
    i_ref_limit: float = 20.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("loop period must be positive")


@dataclass(frozen=True)
class PiState:
    v_sum: float = 0.0
    i_sum: float = 0.0


class PiOutput(NamedTuple):
    i_l_ref: float
    D_b: float
    D_bp: float
    mode: str
    state: PiState


def dual_loop_pi(VG: float, Vref: float, i_l: float, gains: PiGains, st: PiState) -> PiOutput:
    """One tick of the cascaded bus-voltage / battery-current loops.

    Both integrators are per-sample sums.  The current reference is limited to
    ``+-i_ref_limit`` and the duty to [0, 1]; an integrator is frozen on any
    tick whose output it would push further into its limit.

    The loop output is the boost-mode duty ``D_b`` of the battery converter;
    the buck-mode duty is its complement ``D_bp = 1 - D_b``, so a demand for
    more charging current raises ``D_bp``.  ``mode`` is ``"discharge"`` when
    the current reference is positive and ``"charge"`` when it is negative.
    """
    e_v = Vref - VG
    v_sum = st.v_sum + e_v
    i_ref = gains.Kp_v * e_v + gains.Ki_v * v_sum
    lim = gains.i_ref_limit
    if i_ref > lim or i_ref < -lim:
        v_sum = st.v_sum
        i_ref = max(-lim, min(lim, gains.Kp_v * e_v + gains.Ki_v * v_sum))

    e_i = i_ref - i_l
    i_sum = st.i_sum + e_i
    duty = gains.Kp_i * e_i + gains.Ki_i * i_sum
    if duty > 1.0 or duty < 0.0:
        i_sum = st.i_sum
        duty = min(1.0, max(0.0, gains.Kp_i * e_i + gains.Ki_i * i_sum))

    mode = "charge" if i_ref < 0.0 else "discharge"
    return PiOutput(i_ref, duty, 1.0 - duty, mode, PiState(v_sum, i_sum))


def perturb_decision(dDpv: float, dDb: float, mode: str) -> int:
    """Direction (+1 raise, -1 lower) of the next PV duty step.

    ``dDb`` is the change of the active battery-converter duty: the buck duty
    in ``"buck"`` mode, the boost duty in ``"boost"`` mode.  In buck mode the
    next step follows the sign of ``dDpv * dDb``; in boost mode it is the
    opposite sign.  A zero product counts as positive.
    """
    if mode not in ("buck", "boost"):
        raise ValueError(f"mode must be 'buck' or 'boost', got {mode!r}")
    positive = dDpv * dDb >= 0.0
    if mode == "buck":
        return 1 if positive else -1
    return -1 if positive else 1


@dataclass(frozen=True)
class PerturbState:
    D_pv: float
    D_pv_old: float
    D_b: float = 0.0
    D_b_old: float = 0.0
    D_bp: float = 1.0
    D_bp_old: float = 1.0
    delD: float = 0.005
    period: float = 0.05
    next_time: float = 0.05

    @classmethod
    def start(cls, D_pv: float, delD: float = 0.005, period: float = 0.05,
              D_b: float = 0.0) -> "PerturbState":
        """Fresh state whose notional last step was upward."""
        return cls(D_pv=D_pv, D_pv_old=D_pv - delD, D_b=D_b, D_b_old=D_b,
                   D_bp=1.0 - D_b, D_bp_old=1.0 - D_b, delD=delD, period=period,
                   next_time=period)


def perturb_step(st: PerturbState, now: float, mode: str, D_b: float | None = None,
                 D_bp: float | None = None) -> tuple[PerturbState, float]:
    """Advance the perturbation state machine.

    ``D_b``/``D_bp`` are the latest battery-converter duties (stored when
    given).  Nothing else happens unless ``now`` has reached the next
    perturbation instant; then the step direction comes from
    :func:`perturb_decision` and the old values are shifted.  ``mode`` is
    ``"buck"`` or ``"boost"``.
    """
    if D_b is not None or D_bp is not None:
        st = replace(st, D_b=st.D_b if D_b is None else D_b,
                     D_bp=st.D_bp if D_bp is None else D_bp)
    if now + 1e-12 < st.next_time:
        return st, st.D_pv
    dDpv = st.D_pv - st.D_pv_old
    if mode == "buck":
        effect = st.D_bp - st.D_bp_old
    else:
        effect = st.D_b - st.D_b_old
    direction = perturb_decision(dDpv, effect, mode)
    new = min(1.0, max(0.0, st.D_pv + direction * st.delD))
    st = replace(st, D_pv=new, D_pv_old=st.D_pv, D_b_old=st.D_b, D_bp_old=st.D_bp,
                 next_time=st.next_time + st.period)
    return st, new
