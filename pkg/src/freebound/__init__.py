"""Traveling waves and front-fixing simulation for a two-phase free-boundary
reaction-diffusion system."""

__version__ = "0.1.0"

from .errors import FreeBoundaryError
from .nonlin import Nonlinearity, ProblemParams
from .wave import WaveSolution, solve_matching

__all__ = ["FreeBoundaryError", "Nonlinearity", "ProblemParams", "WaveSolution", "solve_matching", "__version__"]
