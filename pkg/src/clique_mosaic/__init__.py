"""Clique decompositions of balanced r-partite graphs, by exact search,
fractional relaxation and iterative absorption, with a MOLS front end."""

__version__ = "0.1.0"

from .core import (BudgetExhausted, CliqueDecomposition, ColouredGraph, Infeasible, MultipartiteGraph,
                   exact_decompose, hat_delta, is_kr_divisible, verify_decomposition)

__all__ = [
    "BudgetExhausted", "CliqueDecomposition", "ColouredGraph", "Infeasible", "MultipartiteGraph",
    "exact_decompose", "hat_delta", "is_kr_divisible", "verify_decomposition", "__version__",
]
