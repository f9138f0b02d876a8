"""Regularized pseudoinverses of tensor-train matrices by two-site MALS."""

from .tt import (TTMatrix, TTVector, extended_vectorize, identity, matricize, merge_cores,
                 mode1_contract, orthogonalize, split_supercore, tt_add, tt_from_dense,
                 tt_inner, tt_kron, tt_matmat, tt_matvec, tt_norm, tt_round, tt_scale,
                 tt_to_dense, tt_transpose, ttmatrix_from_dense, unvectorize)
from .env import LocalProblem, SiteBlocks, advance_left, advance_right, assemble_local_rhs, site_blocks
from .krylov import KrylovConfig, krylov_solve
from .mals import (ConvergenceTrace, MALSConfig, init_guess, local_solve, mals_pinv,
                   objective_report, relative_residual, stopping_check)
from .linsolve import (LinearSystemTT, LinSolveConfig, build_preconditioned_system,
                       mals_linsolve, std_mals_pinv)
from .gallery import (gen_circulant_prescribed, gen_convection_diffusion, gen_laplace,
                      gen_random_svd)
from .oracle import DenseOracle, dense_pinv_oracle, oracle_checks

__version__ = "0.1.0"
