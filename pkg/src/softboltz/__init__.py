"""Fourier-spectral Boltzmann collision operator and verification toolkit for
cutoff soft potentials B = |v - v*|^(-lambda) b(k.sigma) in d = 3."""

from .collision import q_minus, q_plus, q_plus_oracle, q_total, estimate_constants
from .grid import (DensityField, SpectralField, VelocityGrid, gaussian_field, gaussian_mixture, load_field,
                   make_grid, norms, random_mixture, save_field)
from .hypotheses import HypothesisError, admissible, require_admissible
from .kernels import AngularKernel, SoftPotentialKernel, kernel_m, lambda_d, riesz_constant
from .multiplier import MultiplierTable, build_multiplier_table, cached_table
from .solver import existence_time, extend, picard_solve

__version__ = "0.1.0"

__all__ = [
    "AngularKernel", "DensityField", "HypothesisError", "MultiplierTable", "SoftPotentialKernel",
    "SpectralField", "VelocityGrid", "admissible", "build_multiplier_table", "cached_table",
    "estimate_constants", "existence_time", "extend", "gaussian_field", "gaussian_mixture", "kernel_m",
    "lambda_d", "load_field", "make_grid", "norms", "picard_solve", "q_minus", "q_plus", "q_plus_oracle",
    "q_total", "random_mixture", "require_admissible", "riesz_constant", "save_field", "__version__",
]
