"""Lipolysis kinetics with DG transacylation: simulation, QSSA reduction,
sensitivities and parameter sweeps."""

__version__ = "0.1.0"

from .integrator import Event, IntegrationError, IntegratorConfig, Trajectory, integrate
from .kinetics import DimensionalParams, ModelParams, State, nondimensionalize, rhs_full, simulate
from .qssa import (
    NoRootError,
    ReducedModel,
    qssa_approx,
    simulate_reduced,
    solve_qssa,
    solve_qssa_input,
    timescales,
)
from .sensitivity import (
    fd_sensitivity_oracle,
    qssa_sensitivity,
    rhs_sensitivity_full,
    sign_discrepancy_probe,
    simulate_qssa_sensitivity,
    simulate_sensitivity,
)
from .sweep import MetricMap, SweepGrid, relative_change, run_sweep, staged_curves, time_to_threshold
from .estimators import LipolysisSimulator, QssaTransformer

__all__ = [
    "DimensionalParams", "Event", "IntegrationError", "IntegratorConfig", "LipolysisSimulator",
    "MetricMap", "ModelParams", "NoRootError", "QssaTransformer", "ReducedModel", "State",
    "SweepGrid", "Trajectory", "fd_sensitivity_oracle", "integrate", "nondimensionalize",
    "qssa_approx", "qssa_sensitivity", "relative_change", "rhs_full", "rhs_sensitivity_full",
    "run_sweep", "sign_discrepancy_probe", "simulate", "simulate_qssa_sensitivity",
    "simulate_reduced", "simulate_sensitivity", "solve_qssa", "solve_qssa_input",
    "staged_curves", "time_to_threshold", "timescales",
]
