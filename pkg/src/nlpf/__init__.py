"""Second-order convex-splitting solvers for periodic nonlocal Allen-Cahn and
Cahn-Hilliard equations on uniform cell-centered grids."""

from nlpf.grid import GridSpec, Field
from nlpf.convolution import KernelGrid, kernel_gaussian, kernel_difference_of_gaussians, conv_apply, conv_one
from nlpf.energy import ModelParams
from nlpf.stepper import SchemeState, SolverConfig, SolverError, step_nac, step_nch, run

__all__ = [
    "GridSpec",
    "Field",
    "KernelGrid",
    "kernel_gaussian",
    "kernel_difference_of_gaussians",
    "conv_apply",
    "conv_one",
    "ModelParams",
    "SchemeState",
    "SolverConfig",
    "SolverError",
    "step_nac",
    "step_nch",
    "run",
]

__version__ = "0.1.0"
