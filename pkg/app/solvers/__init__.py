from app.solvers.base import BaseSolver
from app.solvers.rbffd import RBFFDSolver
from app.solvers.fdm import FDMSolver, GridLaplacian, fdm_laplacian

__all__ = [
    'BaseSolver',
    'RBFFDSolver',
    'FDMSolver',
    'GridLaplacian',
    'fdm_laplacian'
]
