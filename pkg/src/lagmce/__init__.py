"""Numerical toolkit for the special Lagrangian type equation tr(arctan D^2u) = theta."""
from .errors import *  # noqa: F401,F403
from .fields import Grid, MatrixField, PolynomialTestFunction, ScalarField
from .phase import Expression, PhaseSpec
from .rotation import RotationSpec, beta_star, lewy_yuan_sigma, rotate_graph, rotate_hessian
from .solver import DirichletProblem, SolveOptions, SolveResult, solve
from .spectral import Spectrum, critical_phase, eig_sym, phase, sigma_k

__version__ = "0.1.0"
