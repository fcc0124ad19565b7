"""Scenario presets and the flat ``key.path = value`` configuration grammar.

A configuration is a set of dotted keys, each naming one field::

    scenario = ch4-case1          # base preset (config files only)
    sim.duration = 3.0
    gains.K6 = 19
    observer.rho3 = 0.02
    schedule.irradiance = 0:1000, 0.25:800, 0.5:500

Prefixes: ``sim``, ``system``, ``pv``, ``plant``, ``gains``, ``observer``, ``pi``,
``boost``, ``estimator``, ``schedule``.  A key may be shortened to any suffix
that identifies it uniquely (``rho3``, ``K1``, ``dt``).  Values are numbers,
``true``/``false``, bare strings, or for schedules comma-separated
``time:value`` pairs (temperatures in kelvin).  Blank lines and ``#``
comments are ignored.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, is_dataclass, replace
from pathlib import Path

from .control import BackstepGains, ObserverGains, PiGains
from .estimator import EstimatorConfig
from .plant import BoostParams, SpvdgParams
from .pvmodel import CH2_ARRAY, KC200GT
from .sim import Schedule, SimConfig, SystemParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    schedule: Schedule
    system: SystemParams
    sim: SimConfig
    table: str
    report: str  # which metrics block the runner prints


def _c(k: float) -> float:
    return round(273.15 + k, 2)


_CH2_TABLE = """\
PV array parameter          Circuit parameter
  T_r        298 K            C_a   200 uF
  lambda_r   1000 W/m2        C_b   200 uF
  p          1                L     5 mH
  I_r        1.37e-8 A        r     0.2 ohm
  I_sc       4.8 A            V_d   0.6 V
  R_s        0.2 ohm        Controller parameter
  R_sh       150 ohm          f_s   20 kHz
  n_s        36               K_c   1.5
  n_p        1                t_o   0.025 s
                              dt    0.05 s
Desired MPP values
  Case  T      lambda      v_pvr   i_pvr   P_pvr
  I     298 K  500 W/m2    14.4 V  2.15 A  31.0 W
  II    298 K  1000 W/m2   14.6 V  4.40 A  64.2 W
  III   323 K  1000 W/m2   12.7 V  4.52 A  57.5 W
  IV    323 K  500 W/m2    12.3 V  2.26 A  28.5 W"""

_CH3_TABLE = """\
Subsystem                   Parameter values
PV array at STC             SLX 230 USC module; V_OC = 16 V, I_SC = 4.8 A
                            V_MPP = 14.6 V, I_MPP = 4.4 A
Battery                     Lithium ion, 15 V
DC/DC converter             C1 = 100 uF, C2 = 500 uF, L_pv = 0.35 mH, f_sw = 10 kHz (S1)
DC/DC bidirectional         C3 = 100 uF, R_bat = 0.3 ohm, L_bat = 0.3 mH
converter                   f_sw = 10 kHz (S2, S3)
PI gains                    K_pv = 0.2, K_iv = 0.1
                            K_pi = 0.2, K_ii = 0.01"""

_CH4_TABLE = """\
Subsystem                   Parameter values
Battery voltage             24 V
PV array at STC             Kyocera Solar KC200GT; V_OC = 32.9 V, I_SC = 8.21 A
                            V_MPP = 26.3 V, I_MPP = 7.61 A
DC/DC converter             C_pvi = 3 mF, C_pvo = 3 mF, L_pv = 10 mH,
                            R_pv = 0.5 ohm, R_pvo = 0.1 ohm
DC/DC bidirectional         C_bo = 3 mF, R_b = 0.5 ohm,
converter                   L_b = 10 mH, R_bo = 0.1 ohm
Back-stepping gains         K1 = 10, K2 = 0.04, K3 = 0.04
                            K4 = 0.04, K5 = 0.04, K6 = 15.0"""

_CH5_TABLE = _CH4_TABLE.replace(
    "K1 = 10, K2 = 0.04, K3 = 0.04\n                            K4 = 0.04, K5 = 0.04, K6 = 15.0",
    "K1 = 17, K2 = 0.04, K3 = 0.04\n                            K4 = 0.06, K5 = 0.06, K6 = 19.0"
) + "\nObserver gains              gamma1 = 10, gamma3 = 0.01"

# Not in the source tables, chosen to make the runs possible: R_pv, R_pvo, R_bo, C_L
# of the 20 V PI system and C_L of the 40 V back-stepping system.
CH3_PLANT = SpvdgParams(C_pvi=100e-6, C_pvo=500e-6, C_bo=100e-6, C_L=500e-6,
                        L_pv=0.35e-3, L_b=0.3e-3, R_pv=0.1, R_b=0.3, R_pvo=0.1, R_bo=0.1)
CH4_PLANT = SpvdgParams()
CH4_GAINS = BackstepGains()
CH5_GAINS = BackstepGains(K1=17.0, K2=0.04, K3=0.04, K4=0.06, K5=0.06, K6=19.0)
CH5_OBSERVER = ObserverGains(rho1=10.0, rho2=1.0, rho3=0.01)

_STEPS = (0.0, 1.5, 3.0, 4.5, 6.0)


def _steps(values) -> tuple[tuple[float, float], ...]:
    return tuple(zip(_STEPS, values))


_CASE1 = Schedule(temperature=((0.0, _c(25)),), irradiance=_steps((1500, 1200, 1000, 500, 200)),
                  load=((0.0, 8.0),))
_CASE2_LOAD = 8.0
_CASE3 = Schedule(temperature=((0.0, _c(25)),), irradiance=((0.0, 1000.0),),
                  load=_steps((5.0, 7.0, 9.0, 11.0, 8.0)))


def _case2(load: float) -> Schedule:
    return Schedule(temperature=_steps(tuple(_c(c) for c in (75, 50, 25, 10, 0))),
                    irradiance=((0.0, 1000.0),), load=((0.0, load),))


_CH4_SYSTEM = SystemParams(pv=KC200GT, plant=CH4_PLANT, v_dc=40.0, v_batt=24.0, gains=CH4_GAINS)
_CH5_SYSTEM = replace(_CH4_SYSTEM, gains=CH5_GAINS, observer=CH5_OBSERVER)
_CH3_SYSTEM = SystemParams(pv=CH2_ARRAY, plant=CH3_PLANT, v_dc=20.0, v_batt=15.0,
                           pi=PiGains(0.2, 0.1, 0.2, 0.01, 2e-4))
_CH2_SYSTEM = SystemParams(pv=CH2_ARRAY, boost=BoostParams(), estimator=EstimatorConfig(),
                           sample_offset=0.025)

_BS = SimConfig(duration=7.5, controller="backstep")
_DOB = SimConfig(duration=7.5, controller="dob-backstep")

PRESETS: dict[str, Preset] = {p.name: p for p in (
    Preset("ch2-estimate", "boost MPPT from estimated temperature/irradiance; estimator accuracy "
           "for the four desired-value cases",
           Schedule(temperature=((0.0, 298.0), (2.0, 323.0)),
                    irradiance=((0.0, 500.0), (1.0, 1000.0), (3.0, 500.0)), load=((0.0, 50.0),)),
           _CH2_SYSTEM, SimConfig(duration=4.0, controller="feedforward-mppt"), _CH2_TABLE,
           "estimate"),
    Preset("ch2-mppt", "boost MPPT tracking through load steps at STC",
           Schedule(temperature=((0.0, 298.0),), irradiance=((0.0, 1000.0),),
                    load=((0.0, 50.0), (1.0, 30.0), (2.0, 70.0))),
           _CH2_SYSTEM, SimConfig(duration=3.0, controller="feedforward-mppt"), _CH2_TABLE,
           "mppt"),
    Preset("ch3-unified", "sensor-free perturbation MPPT with dual-loop PI bus control, "
           "irradiance 1000/800/500/750",
           Schedule(temperature=((0.0, 298.0),),
                    irradiance=((0.0, 1000.0), (0.25, 800.0), (0.5, 500.0), (0.75, 750.0)),
                    load=((0.0, 10.0),)),
           _CH3_SYSTEM, SimConfig(duration=1.0, controller="pi-perturb"), _CH3_TABLE, "pi"),
    Preset("ch4-case1", "back-stepping, irradiance 1500/1200/1000/500/200 W/m2",
           _CASE1, _CH4_SYSTEM, _BS, _CH4_TABLE, "backstep"),
    Preset("ch4-case2", "back-stepping, temperature 75/50/25/10/0 C",
           _case2(_CASE2_LOAD), _CH4_SYSTEM, _BS, _CH4_TABLE, "backstep"),
    Preset("ch4-case3", "back-stepping, load 5/7/9/11/8 ohm",
           _CASE3, _CH4_SYSTEM, _BS, _CH4_TABLE, "backstep"),
    Preset("ch5-case1", "observer back-stepping, irradiance 1500/1200/1000/500/200 W/m2",
           _CASE1, _CH5_SYSTEM, _DOB, _CH5_TABLE, "backstep"),
    Preset("ch5-case2", "observer back-stepping, temperature 75/50/25/10/0 C, 266.7 W load",
           _case2(6.0), _CH5_SYSTEM, _DOB, _CH5_TABLE, "backstep"),
    Preset("ch5-case3", "observer back-stepping, load 5/7/9/11/8 ohm",
           _CASE3, _CH5_SYSTEM, _DOB, _CH5_TABLE, "backstep"),
)}


def list_scenarios() -> list[tuple[str, str]]:
    return [(p.name, p.description) for p in PRESETS.values()]


# -- flat key grammar -----------------------------------------------------------

_SECTIONS = ("pv", "plant", "gains", "observer", "pi", "boost", "estimator")


def _flatten(preset: Preset) -> dict[str, object]:
    out: dict[str, object] = {"scenario": preset.name}
    for f in fields(preset.sim):
        out[f"sim.{f.name}"] = getattr(preset.sim, f.name)
    for f in fields(preset.system):
        v = getattr(preset.system, f.name)
        if is_dataclass(v):
            for g in fields(v):
                out[f"{f.name}.{g.name}"] = getattr(v, g.name)
        else:
            out[f"system.{f.name}"] = v
    for name in ("temperature", "irradiance", "load"):
        out[f"schedule.{name}"] = getattr(preset.schedule, name)
    return out


def _resolve_key(key: str, known) -> str:
    if key in known:
        return key
    hits = [k for k in known if k.endswith("." + key)]
    if len(hits) == 1:
        return hits[0]
    if not hits:
        raise ConfigError(f"unknown key {key!r}")
    raise ConfigError(f"ambiguous key {key!r}: {', '.join(sorted(hits))}")


def _parse_schedule(text: str):
    segs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            t, v = part.split(":")
            segs.append((float(t), float(v)))
        except ValueError:
            raise ConfigError(f"bad schedule segment {part!r}; expected time:value") from None
    return tuple(segs)


def _coerce(key: str, raw: str, current):
    raw = raw.strip()
    if key.startswith("schedule."):
        return _parse_schedule(raw)
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key} expects true/false, got {raw!r}")
    if isinstance(current, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got {raw!r}") from None
    if isinstance(current, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} expects a number, got {raw!r}") from None
    return raw


def parse_lines(text: str) -> list[tuple[str, str]]:
    """``(key, raw_value)`` pairs of a config text, in order."""
    pairs = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        pairs.append((k.strip(), v.strip()))
    return pairs


def parse_override(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    k, v = item.split("=", 1)
    return k.strip(), v.strip()


@dataclass(frozen=True)
class ResolvedRun:
    preset: Preset
    schedule: Schedule
    system: SystemParams
    sim: SimConfig
    values: dict
    overrides: tuple[tuple[str, str], ...]

    @property
    def config_hash(self) -> str:
        return config_hash(self.values)


def config_hash(values: dict) -> str:
    """SHA-256 over the sorted canonical ``key = value`` lines."""
    text = "\n".join(f"{k} = {_fmt(values[k])}" for k in sorted(values))
    return hashlib.sha256(text.encode()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(f"{t!r}:{x!r}" for t, x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def canonical_lines(values: dict) -> list[str]:
    return [f"{k} = {_fmt(values[k])}" for k in sorted(values)]


def resolve(target: str, overrides=()) -> ResolvedRun:
    """Build a run from a preset name or a config file path plus ``key=value`` overrides.

    File values apply over the file's base preset; overrides apply last.
    """
    file_pairs: list[tuple[str, str]] = []
    if target in PRESETS:
        base = PRESETS[target]
    else:
        path = Path(target)
        if not path.is_file():
            raise ConfigError(f"{target!r} is neither a preset nor a readable config file")
        file_pairs = parse_lines(path.read_text())
        names = [v for k, v in file_pairs if k == "scenario"]
        if not names:
            raise ConfigError(f"{target}: missing 'scenario = <preset>' line")
        if names[-1] not in PRESETS:
            raise ConfigError(f"{target}: unknown scenario {names[-1]!r}")
        base = PRESETS[names[-1]]
        file_pairs = [(k, v) for k, v in file_pairs if k != "scenario"]

    values = _flatten(base)
    ovr = tuple(parse_override(o) if isinstance(o, str) else tuple(o) for o in overrides)
    for k, raw in list(file_pairs) + list(ovr):
        if k == "scenario":
            raise ConfigError("the scenario can only be chosen by name or in a config file")
        full = _resolve_key(k, values)
        values[full] = _coerce(full, raw, values[full])

    try:
        schedule = Schedule(values["schedule.temperature"], values["schedule.irradiance"],
                            values["schedule.load"])
        sim = SimConfig(**{f.name: values[f"sim.{f.name}"] for f in fields(SimConfig)})
        parts = {}
        for f in fields(SystemParams):
            v = getattr(base.system, f.name)
            if is_dataclass(v):
                parts[f.name] = type(v)(**{g.name: values[f"{f.name}.{g.name}"] for g in fields(v)})
            else:
                parts[f.name] = values[f"system.{f.name}"]
        system = SystemParams(**parts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return ResolvedRun(base, schedule, system, sim, values, ovr)
