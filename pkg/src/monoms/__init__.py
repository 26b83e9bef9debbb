"""Monotone multiscale finite-volume solver for elliptic pressure equations.

The package assembles TPFA and MPFA-O systems on structured and perturbed
grids, builds restricted-smoothed (MsRSB) multiscale operators, repairs the
coarse and fine operators towards M-matrices while preserving their action
on constants, and runs one-step and iterative two-level solves.
"""
from .discretization import (BoundarySpec, SparseSystem, assemble, assemble_mpfa_o, assemble_tpfa,
                             constant_dirichlet, half_transmissibilities, left_to_right)
from .errors import (AssemblyError, ConfigError, DataError, DegenerateGridError, DivergenceError,
                     FactorizationError, InvalidArgumentError, InvalidOperatorError, MonomsError,
                     SingularMatrixError, SpeFormatError)
from .fields import (TensorField, diagonal_field, lognormal_field, read_spe10, rotated_tensor,
                     uniform_tensor, write_spe10)
from .geometry import (CoarsePartition, Grid, SupportRegions, build_cartesian_grid,
                       build_support_regions, partition_uniform, perturb_interior_nodes)
from .linalg import (DirectSolver, Ilu0Factors, direct_solve, ilu0_apply, ilu0_factor, spmv,
                     triple_product)
from .monotone import (am_operator, build_perturbation, count_positive_offdiagonals,
                       flag_positive_offdiagonals, m_matrix_fine, nullspace_drift, repair_report)
from .msrsb import (Prolongation, Restriction, connectivity_matrix, init_prolongation,
                    restriction_cv, restriction_galerkin, smooth_prolongation)
from .solver import (SolveReport, bound_check, coarse_operator, error_norms, iterative_multiscale,
                     one_step_multiscale)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
