"""Flexible GMRES with graph neural preconditioners."""

from .sparse import (
    CsrMatrix,
    gershgorin_gamma,
    normalize,
    parse_matrix_market,
    prescale,
    read_matrix_market,
    spmm,
    spmv,
    write_matrix_market,
)
from .krylov import (
    SolveConfig,
    SolveOutcome,
    arnoldi_cycle,
    fgmres_solve,
    gmres_solve,
    hessenberg_lstsq,
    residual_projection_check,
)
from .gnn import GnnDims, GnnParams, apply_preconditioner, gnn_backward, gnn_forward, init_params
from .training import TrainConfig, train_preconditioner

__version__ = "0.1.0"
