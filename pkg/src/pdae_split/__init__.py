"""Lie and Strang splitting with consistency corrections for constrained
diffusion-reaction systems.

The library splits a linearly constrained semilinear evolution equation into
a nonlinear reaction ODE and a linear constrained subsystem that is advanced
exactly through a constrained variation-of-constants formula.  A per-step
correction term keeps the reaction output consistent with the constraint to
first order, which removes the order reduction of Strang splitting.
"""

from .constraints import (ConstraintBlock, ConstrainedSystem, Grid,
                          consistency_residual, make_constraint_block,
                          multiplier_full_system, multiplier_within_splitting,
                          project_p0, recover_multiplier)
from .experiments import (ConvergenceReport, LocalOrderReport, OrderTable,
                          Reference, correction_comparison, global_convergence,
                          implicit_euler_dae, local_order, order_estimate,
                          order_table, reference_solution)
from .linalg import affine_exp_integral, expm, lu_solve, phi_triple
from .problems import (build_integral_mean, build_mechanical, build_problem,
                       build_subset, subset_perturbation)
from .schemes import (Correction, SchemeConfig, Trajectory, integrate,
                      lie_reversed_step, lie_step, make_correction,
                      strang_reversed_step, strang_step)
from .subflows import LinearFlowCache, linear_pdae_flow, reaction_flow

__version__ = "0.1.0"

__all__ = [
    "ConstraintBlock", "ConstrainedSystem", "Grid", "consistency_residual",
    "make_constraint_block", "multiplier_full_system",
    "multiplier_within_splitting", "project_p0", "recover_multiplier",
    "ConvergenceReport", "LocalOrderReport", "OrderTable", "Reference",
    "correction_comparison", "global_convergence", "implicit_euler_dae",
    "local_order", "order_estimate", "order_table", "reference_solution",
    "affine_exp_integral", "expm", "lu_solve", "phi_triple",
    "build_integral_mean", "build_mechanical", "build_problem", "build_subset",
    "subset_perturbation",
    "Correction", "SchemeConfig", "Trajectory", "integrate",
    "lie_reversed_step", "lie_step", "make_correction",
    "strang_reversed_step", "strang_step",
    "LinearFlowCache", "linear_pdae_flow", "reaction_flow",
    "__version__",
]
