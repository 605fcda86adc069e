"""Subset selection: graph-cut utility, entropy costs and cost-effective greedy.

The greedy inner loop runs in a compiled extension when it is available and
falls back to pure Python otherwise; ``BACKEND`` names the active one. Set
``WEAKFUSE_PURE_PYTHON=1`` to force the fallback.
"""
from .core import (
    BACKEND,
    BACKENDS,
    CostVector,
    SelectionResult,
    SimilarityKernel,
    brute_force_opt,
    ceg,
    cosine_kernel,
    graphcut_utility,
    marginal_gain,
    normalized_costs,
    select_subset,
)

__all__ = [
    "BACKEND",
    "BACKENDS",
    "CostVector",
    "SelectionResult",
    "SimilarityKernel",
    "brute_force_opt",
    "ceg",
    "cosine_kernel",
    "graphcut_utility",
    "marginal_gain",
    "normalized_costs",
    "select_subset",
]
