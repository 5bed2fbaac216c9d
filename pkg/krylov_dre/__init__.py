# flake8: noqa

from .bdf import BdfScheme, ReducedTrajectory, bdf_integrate
from .errors import *
from .krylov import BasisState, RationalExtras, init_basis
from .problems import ProblemRecipe, build_problem, register_problem
from .projection import (
    DreProblem,
    SolveResult,
    SolverConfig,
    feedback_gain,
    solve_dre,
    steady_state,
)

__version__ = "0.1.0"
