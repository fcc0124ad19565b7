"""Controllers: back-stepping (measured or observed disturbances) and PI/perturbation."""

from .backstep import (BackstepController, BackstepGains, Errors, ObserverGains,
                       ObserverState, backstep_control, backstep_virtual_alpha3,
                       backstep_virtual_alpha5, battery_duty, dob_backstep_control,
                       error_energy, observer_rates, pv_duty, tracking_errors)
from .pi_perturb import (PerturbState, PiGains, PiOutput, PiState, dual_loop_pi,
                         perturb_decision, perturb_step)

__all__ = [
    "BackstepController", "BackstepGains", "Errors", "ObserverGains", "ObserverState",
    "backstep_control", "backstep_virtual_alpha3", "backstep_virtual_alpha5",
    "battery_duty", "dob_backstep_control", "error_energy", "observer_rates", "pv_duty",
    "tracking_errors", "PerturbState", "PiGains", "PiOutput", "PiState", "dual_loop_pi",
    "perturb_decision", "perturb_step",
]
