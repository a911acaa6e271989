"""
控制层：导纳控制、混合监督器与对比控制器
"""

from .admittance import (
    AdmittanceGains,
    TerminationWindow,
    WrenchFilter,
    admittance_step,
    check_termination,
    deadzone,
    filter_wrench,
    select,
)
from .baselines import run_closed_loop, run_open_loop
from .estimation import TargetEstimate, estimate_target, miscalibrated_estimate, perturb_calibration
from .interaction import InteractionController
from .supervisor import approach_pose, compute_metrics, run_hybrid

__all__ = [
    "AdmittanceGains",
    "InteractionController",
    "TargetEstimate",
    "TerminationWindow",
    "WrenchFilter",
    "admittance_step",
    "approach_pose",
    "check_termination",
    "compute_metrics",
    "deadzone",
    "estimate_target",
    "filter_wrench",
    "miscalibrated_estimate",
    "perturb_calibration",
    "run_closed_loop",
    "run_hybrid",
    "run_open_loop",
    "select",
]
