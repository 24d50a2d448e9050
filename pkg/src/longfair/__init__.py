"""Long-term fair decision policies for finite-state dynamical systems."""

from .markov import (
    check_aperiodic,
    check_irreducible,
    evolve,
    kernel_power,
    stationary_distribution,
    total_variation,
    validate_kernel,
)
from .models import GenerativeModel, build_group_kernel, load_dynamics_preset, load_model
from .optimize import OptimizationSpec, SolverConfig, evaluate, preset_maxqual, preset_utilmax_eop, solve
from .simulate import multi_start_convergence, simulate

__version__ = "0.1.0"
