"""Gaussian-process-corrected model predictive control for a platoon of
autonomous vehicles followed by one human-driven vehicle."""

from .chance_constraints import DistancePolicy, inverse_normal_cdf, tightened_min_distance
from .gp_regression import Dataset, GpModel, Kernel, fit, predict
from .hv_model import DEFAULT_ARX, ArxCoefficients, TruthHvSpec, VelocityHistory, arx_step, corrected_step
from .mpc_controller import MpcConfig, MpcController, MpcSolution, solve
from .platoon_dynamics import PlatoonState, VehicleState, initial_platoon
from .sim_harness import Scenario, SimLog, braking_scenario, compare, compute_metrics, constant_scenario, run

__version__ = "0.1.0"

__all__ = [
    "ArxCoefficients",
    "Dataset",
    "DistancePolicy",
    "GpModel",
    "Kernel",
    "MpcConfig",
    "MpcController",
    "MpcSolution",
    "DEFAULT_ARX",
    "PlatoonState",
    "Scenario",
    "SimLog",
    "TruthHvSpec",
    "VehicleState",
    "VelocityHistory",
    "arx_step",
    "braking_scenario",
    "compare",
    "compute_metrics",
    "constant_scenario",
    "corrected_step",
    "fit",
    "initial_platoon",
    "inverse_normal_cdf",
    "predict",
    "run",
    "solve",
    "tightened_min_distance",
]
