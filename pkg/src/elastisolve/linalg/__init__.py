"""Sparse kernels, GMRES and preconditioners."""

from .krylov import GmresResult, KrylovConfig, gmres
from .preconditioners import (BlockJacobi, DirectSolver, IdentityPreconditioner, Jacobi, KrylovSolver,
                              Preconditioner, SchurFieldSplit, SmoothedAggregationAMG, make_amg,
                              make_block_jacobi, make_jacobi, make_schur_fieldsplit)
from .sparse import BlockOperator, CsrMatrix, CsrPattern, as_operator, read_matrix_market, spmv, write_matrix_market

__all__ = [
    "BlockJacobi", "BlockOperator", "CsrMatrix", "CsrPattern", "DirectSolver", "GmresResult",
    "IdentityPreconditioner", "Jacobi", "KrylovConfig", "KrylovSolver", "Preconditioner", "SchurFieldSplit",
    "SmoothedAggregationAMG", "as_operator", "gmres", "make_amg", "make_block_jacobi", "make_jacobi",
    "make_schur_fieldsplit", "read_matrix_market", "spmv", "write_matrix_market",
]
