"""Standalone PV/battery DC microgrid: array model, estimator, converters, controllers, simulator."""

from .errors import PvdgError
from .pvmodel import CH2_ARRAY, KC200GT, Environment, PvArrayParams, find_mpp, pv_current
from .sim import Schedule, SimConfig, SystemParams, Trace, run_scenario, settling_time

__all__ = ["PvdgError", "CH2_ARRAY", "KC200GT", "Environment", "PvArrayParams", "find_mpp",
           "pv_current", "Schedule", "SimConfig", "SystemParams", "Trace", "run_scenario",
           "settling_time"]
