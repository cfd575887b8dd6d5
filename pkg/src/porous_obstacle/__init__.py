"""Penalised finite-difference and pseudo-spectral solvers for the stochastic
porous medium equation with an upper obstacle on the torus, with estimators and
an experiment harness."""
from .coefficients import (EntropyTestFn, ForcingLaw, NoiseLaw, PenaltyLaw, PorousLaw,
                           RegularizedLaw, build_regularized, mollified_initial)
from .grid import Field, GridSpec, MollifierSpec, mollify
from .solver import Problem, SolverConfig, Trajectory, run, run_ensemble

__all__ = [
    "EntropyTestFn", "Field", "ForcingLaw", "GridSpec", "MollifierSpec", "NoiseLaw",
    "PenaltyLaw", "PorousLaw", "Problem", "RegularizedLaw", "SolverConfig", "Trajectory",
    "build_regularized", "mollified_initial", "mollify", "run", "run_ensemble",
]
__version__ = "0.1.0"
