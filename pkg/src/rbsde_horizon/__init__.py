"""Linear reflected BSDEs under a random horizon, solved exactly on a binary tree.

The F-level problem is a Snell envelope on the reference tree; the G-level
solution lives on (path, death index) states and is obtained by lifting.
"""
from rbsde_horizon.errors import (
    ArgumentError, BarrierError, ConfigurationError, ContractViolation, InputError,
    InvariantViolation, PositivityError, RBSDEError,
)
from rbsde_horizon.kernels import BACKEND
from rbsde_horizon.tree import TreeModel, build_tree, cond_expectation, martingale_representation
from rbsde_horizon.random_time import (
    DensityKernel, EnlargedSpace, RandomTimeModel, anticipative_mix_kernel,
    build_enlarged_space, build_random_time, cox_kernel, qtilde_expectation,
    random_kernel, reference_kernel,
)
from rbsde_horizon.rbsde_f import (
    NO_BARRIER, DataTriplet, SolutionF, TransformedDataF, solve_f_rbsde,
    solve_f_rbsde_infinite, transform_data, verify_skorokhod,
)
from rbsde_horizon.rbsde_g import SolutionG, lift_solution, residual_check, solve_g_snell_oracle
from rbsde_horizon.estimates import NormReport, kappa, solution_norms, solve_pipeline
from rbsde_horizon.horizon import equivalent_rbsde_check, qtilde_limit_check, solve_infinite

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ArgumentError", "BarrierError", "ConfigurationError", "ContractViolation",
    "InputError", "InvariantViolation", "PositivityError", "RBSDEError",
    "TreeModel", "build_tree", "cond_expectation", "martingale_representation",
    "DensityKernel", "EnlargedSpace", "RandomTimeModel", "anticipative_mix_kernel",
    "build_enlarged_space", "build_random_time", "cox_kernel", "qtilde_expectation",
    "random_kernel", "reference_kernel",
    "NO_BARRIER", "DataTriplet", "SolutionF", "TransformedDataF", "solve_f_rbsde",
    "solve_f_rbsde_infinite", "transform_data", "verify_skorokhod",
    "SolutionG", "lift_solution", "residual_check", "solve_g_snell_oracle",
    "NormReport", "kappa", "solution_norms", "solve_pipeline",
    "equivalent_rbsde_check", "qtilde_limit_check", "solve_infinite",
]
