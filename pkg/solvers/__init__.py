from solvers.direct import DirectSolver, Factorization, direct_solve
from solvers.multigrid import MultigridSolver, MultilevelHierarchy, estimate_contraction, one_step

SOLVERS = ("multigrid", "direct")

__all__ = [
    "DirectSolver", "Factorization", "direct_solve",
    "MultigridSolver", "MultilevelHierarchy", "estimate_contraction", "one_step",
    "SOLVERS",
]
