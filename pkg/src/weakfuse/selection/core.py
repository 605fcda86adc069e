"""Generalized graph-cut subset selection under an entropy knapsack."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, DomainError
from ..label_model import entropy
from . import _ceg_py

if os.environ.get("WEAKFUSE_PURE_PYTHON"):
    _ceg_fast = None
else:
    try:
        from . import _ceg as _ceg_fast
    except ImportError:  # extension not built
        _ceg_fast = None

BACKEND = "cython" if _ceg_fast is not None else "python"
BACKENDS = {"python": _ceg_py}
if _ceg_fast is not None:
    BACKENDS["cython"] = _ceg_fast

RATIO_MODES = ("per_cost", "uniform")
BRUTE_FORCE_MAX_N = 20


@dataclass
class SimilarityKernel:
    sim: np.ndarray
    row_sums: np.ndarray = None

    def __post_init__(self):
        self.sim = np.ascontiguousarray(self.sim, dtype=np.float64)
        if self.sim.ndim != 2 or self.sim.shape[0] != self.sim.shape[1]:
            raise DomainError(f"kernel must be square, got {self.sim.shape}")
        if self.row_sums is None:
            # Σ_i sim[i, v]: column sums, equal to row sums for a symmetric kernel
            self.row_sums = self.sim.sum(axis=0)
        self.row_sums = np.ascontiguousarray(self.row_sums, dtype=np.float64)

    @property
    def n(self):
        return self.sim.shape[0]


@dataclass
class CostVector:
    costs: np.ndarray
    total: float
    fallback: bool = False


@dataclass
class SelectionResult:
    indices: list
    utility: float
    total_cost: float
    budget: float
    variant: str
    gamma: float
    eta: float = None
    seed: int = None
    winner: str = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["indices"] = [int(i) for i in self.indices]
        if not d["extra"]:
            del d["extra"]
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def cosine_kernel(features):
    """Pairwise ``(1 + cos) / 2`` similarity, in [0, 1]."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DomainError(f"features must be 2-D, got shape {x.shape}")
    norms = np.linalg.norm(x, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DomainError(f"feature row {int(zero[0])} has zero norm; cosine undefined")
    u = x / norms[:, None]
    cos = np.clip(u @ u.T, -1.0, 1.0)
    sim = 0.5 * (1.0 + cos)
    sim = 0.5 * (sim + sim.T)
    np.fill_diagonal(sim, 1.0)
    return SimilarityKernel(sim)


def _check_indices(S, n):
    S = np.asarray(list(S), dtype=np.int64)
    if S.size and (S.min() < 0 or S.max() >= n):
        raise DomainError(f"index out of range for kernel of size {n}")
    return S


def graphcut_utility(S, kernel, gamma):
    """``gamma * Σ_{i, j∈S} s_ij - Σ_{l, m∈S} s_lm`` over ordered pairs (l = m included)."""
    S = _check_indices(S, kernel.n)
    if S.size == 0:
        return 0.0
    rep = kernel.row_sums[S].sum()
    div = kernel.sim[np.ix_(S, S)].sum()
    return float(gamma * rep - div)


def marginal_gain(S, v, kernel, gamma):
    S = _check_indices(S, kernel.n)
    if not 0 <= v < kernel.n:
        raise DomainError(f"index {v} out of range for kernel of size {kernel.n}")
    if v in set(S.tolist()):
        raise DomainError(f"element {v} is already in the set")
    cross = kernel.sim[S, v].sum() if S.size else 0.0
    return float(gamma * kernel.row_sums[v] - 2.0 * cross - kernel.sim[v, v])


def normalized_costs(dists):
    """Entropy costs rescaled so they sum to the number of samples.

    All-deterministic inputs (total entropy < 1e-12) fall back to unit costs.
    """
    dists = np.atleast_2d(np.asarray(dists, dtype=np.float64))
    n = dists.shape[0]
    if n < 1:
        raise DomainError("need at least one distribution")
    h = entropy(dists)
    total = h.sum()
    if total < 1e-12:
        return CostVector(np.ones(n), float(n), fallback=True)
    costs = h * (n / total)
    return CostVector(costs, float(costs.sum()))


def _costs_array(costs):
    if isinstance(costs, CostVector):
        costs = costs.costs
    costs = np.ascontiguousarray(costs, dtype=np.float64)
    if np.any(costs < 0):
        raise DomainError("costs must be nonnegative")
    return costs


def ceg(kernel, costs, budget, gamma, ratio_mode="per_cost", unit_budget=False,
        lazy=True, backend=None):
    """Cost-effective greedy under a knapsack budget.

    ``ratio_mode='per_cost'`` ranks candidates by gain per unit cost,
    ``'uniform'`` by raw gain. Feasibility always uses the actual costs unless
    ``unit_budget`` is set, in which case every element costs 1 (and
    ``total_cost`` is reported in those units).
    """
    if ratio_mode not in RATIO_MODES:
        raise ConfigError(f"ratio_mode must be one of {RATIO_MODES}, got {ratio_mode!r}")
    if not budget > 0:
        raise ConfigError(f"budget must be positive, got {budget}")
    c = _costs_array(costs)
    if c.shape[0] != kernel.n:
        raise DomainError(f"{c.shape[0]} costs for a kernel of size {kernel.n}")
    impl = BACKENDS[backend or BACKEND]
    fn = impl.ceg_lazy if lazy else impl.ceg_naive
    chosen = fn(kernel.sim, kernel.row_sums, c, float(budget), float(gamma),
                ratio_mode == "per_cost", bool(unit_budget))
    total = 0.0
    for i in chosen:  # same accumulation order as the greedy's own budget check
        total += 1.0 if unit_budget else float(c[i])
    return SelectionResult(
        indices=list(chosen),
        utility=graphcut_utility(chosen, kernel, gamma),
        total_cost=total,
        budget=float(budget),
        variant="cost" if ratio_mode == "per_cost" else "uniform",
        gamma=float(gamma),
    )


def select_subset(kernel, costs, eta, gamma, unit_budget=False, backend=None):
    """Run both greedy variants under ``B = eta * Σ costs`` and keep the better one.

    Ties go to the per-cost run. ``unit_budget`` only affects the uniform run.
    """
    if not 0.0 < eta < 1.0:
        raise ConfigError(f"eta must lie in (0, 1), got {eta}")
    if gamma < 2.0:
        raise ConfigError(f"gamma must be >= 2 for a monotone utility, got {gamma}")
    c = _costs_array(costs)
    budget = eta * float(c.sum())
    if budget <= 0:
        raise ConfigError("total cost is zero; nothing to budget")
    by_cost = ceg(kernel, c, budget, gamma, "per_cost", backend=backend)
    by_gain = ceg(kernel, c, budget, gamma, "uniform", unit_budget=unit_budget, backend=backend)
    best = by_cost if by_cost.utility >= by_gain.utility else by_gain
    return SelectionResult(
        indices=list(best.indices),
        utility=best.utility,
        total_cost=best.total_cost,
        budget=budget,
        variant="best",
        gamma=float(gamma),
        eta=float(eta),
        winner=best.variant,
        extra={"utility_cost": by_cost.utility, "utility_uniform": by_gain.utility},
    )


def brute_force_opt(kernel, costs, budget, gamma, chunk=1 << 14):
    """Exact maximizer of the graph-cut utility over all feasible subsets.

    Evaluates the utility directly from its definition for every bitmask,
    independent of the greedy gain formula. Returns ``(indices, utility)``.
    """
    n = kernel.n
    if n > BRUTE_FORCE_MAX_N:
        raise DomainError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    c = _costs_array(costs)
    bits = np.arange(n, dtype=np.int64)
    best_val, best_mask = 0.0, 0
    for start in range(0, 1 << n, chunk):
        masks = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        M = ((masks[:, None] >> bits) & 1).astype(np.float64)
        cost = M @ c
        rep = M @ kernel.row_sums
        div = np.einsum("si,ij,sj->s", M, kernel.sim, M)
        val = gamma * rep - div
        val[cost > budget] = -np.inf
        i = int(np.argmax(val))
        if val[i] > best_val:
            best_val, best_mask = float(val[i]), int(masks[i])
    chosen = [i for i in range(n) if best_mask >> i & 1]
    return chosen, (graphcut_utility(chosen, kernel, gamma) if chosen else 0.0)
