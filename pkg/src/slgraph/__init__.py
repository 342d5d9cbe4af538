"""Learned conservative semi-Lagrangian transport on dynamical graphs.

A graph network maps the solution and the normalized upstream shifts to
per-edge update coefficients whose donor sums are exactly one, so every
step conserves mass for any parameter values. Classical WENO5 and
semi-Lagrangian solvers provide training data and baselines.
"""

from .grid import Field, Grid1D, Grid2D
from .model import ModelConfig, ModelParams, init_params, step

__version__ = "0.1.0"

__all__ = ["Field", "Grid1D", "Grid2D", "ModelConfig", "ModelParams", "init_params", "step"]
