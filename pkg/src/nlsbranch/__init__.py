"""Radial NLS soliton branches: profiles, linearized spectra, modulation
tracking and the convergence/escape dichotomy."""

from .errors import NLSBranchError
from .grid import RadialGrid
from .model import NonlinearityModel, admissibility
from .soliton import SolitonBranch, solve_profile
from .spectral import (Projections, SpectralBranch, build_operators,
                       unstable_eigenpair)
from .evolution import FieldState, conserved, evolve, step
from .modulation import decompose, dynamic_residuals, track
from .dichotomy import ExperimentConfig, run_experiment, sweep

__all__ = ["NLSBranchError", "RadialGrid", "NonlinearityModel",
           "admissibility", "SolitonBranch", "solve_profile", "Projections",
           "SpectralBranch", "build_operators", "unstable_eigenpair",
           "FieldState", "conserved", "evolve", "step", "decompose",
           "dynamic_residuals", "track", "ExperimentConfig", "run_experiment",
           "sweep"]
