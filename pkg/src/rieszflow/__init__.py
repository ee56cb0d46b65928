"""Stationary states, extremals and dynamics of aggregation-diffusion
equations with a nonlinear Riesz potential, on radial grids."""

__version__ = "0.1.0"

from .errors import (BuildError, ConfigurationError, DivergenceError, DomainError,
                     GridMismatchError, ParameterError, RegimeError, RieszFlowError,
                     StabilityError, TruncationError)
from .grid import (ModelParams, RadialDensity, RadialGrid, dilate, lp_norm,
                   make_profile, rearrange, stretch)
from .riesz import (KernelConstants, RieszOperator, build_operator, kurokawa_error,
                    nonlinear_potential, riesz_constant)
from .energy import (EnergyBreakdown, RegimeReport, classify_regime, critical_mass,
                     free_energy, free_energy_limit, hls_upper_bound, kappa)
from .steady import (SolverConfig, SteadyReport, estimate_Hstar, estimate_Mc,
                     hls_extremal, solve_el)
from .evolve import EvolveConfig, TrajectoryRecord, run, step, velocity
from .asymptotics import (LimitProfile, SweepReport, fair_limit_study, gamma_probe,
                          limit_profile, sweep_s)

__all__ = [
    "BuildError", "ConfigurationError", "DivergenceError", "DomainError",
    "GridMismatchError", "ParameterError", "RegimeError", "RieszFlowError",
    "StabilityError", "TruncationError",
    "ModelParams", "RadialDensity", "RadialGrid", "dilate", "lp_norm", "make_profile",
    "rearrange", "stretch",
    "KernelConstants", "RieszOperator", "build_operator", "kurokawa_error",
    "nonlinear_potential", "riesz_constant",
    "EnergyBreakdown", "RegimeReport", "classify_regime", "critical_mass", "free_energy",
    "free_energy_limit", "hls_upper_bound", "kappa",
    "SolverConfig", "SteadyReport", "estimate_Hstar", "estimate_Mc", "hls_extremal",
    "solve_el",
    "EvolveConfig", "TrajectoryRecord", "run", "step", "velocity",
    "LimitProfile", "SweepReport", "fair_limit_study", "gamma_probe", "limit_profile",
    "sweep_s",
]
