"""Pure-Python cost-effective greedy kernels (fallback for the compiled core).

Both routines share one scoring rule so their outputs are bit-identical:

    gain(v)  = gamma * row_sums[v] - 2.0 * cov[v] - sim[v, v]
    score(v) = gain(v) / max(cost[v], COST_FLOOR)   (per_cost)
             = gain(v)                               (uniform)

where ``cov[v]`` accumulates ``sim[l, v]`` over the selection in insertion
order. Ties go to the lowest index. A candidate is feasible while
``spent + cost <= budget``; infeasible candidates are skipped, never ending
the scan.
"""
import heapq

import numpy as np

COST_FLOOR = 1e-9


def ceg_lazy(sim, row_sums, costs, budget, gamma, per_cost, unit_budget=False):
    n = len(costs)
    rows = {}  # selected element -> its kernel row as Python floats
    rs = [float(x) for x in row_sums]
    cs = [float(x) for x in costs]
    diag = np.diagonal(sim).tolist()
    denom = [max(c, COST_FLOOR) if per_cost else 1.0 for c in cs]
    cov = [0.0] * n
    seen = [0] * n
    selected = []
    spent = 0.0

    heap = []
    for v in range(n):
        gain = gamma * rs[v] - 2.0 * cov[v] - diag[v]
        score = gain / denom[v] if per_cost else gain
        heap.append((-score, v))
    heapq.heapify(heap)

    while heap:
        neg, v = heapq.heappop(heap)
        c = 1.0 if unit_budget else cs[v]
        if spent + c > budget:
            continue  # spent only grows, so v stays infeasible
        k = len(selected)
        if seen[v] < k:
            acc = cov[v]
            for l in selected[seen[v]:]:
                acc += rows[l][v]
            cov[v] = acc
            seen[v] = k
            gain = gamma * rs[v] - 2.0 * acc - diag[v]
            score = gain / denom[v] if per_cost else gain
            heapq.heappush(heap, (-score, v))
            continue
        if -neg <= 0.0:
            break
        selected.append(v)
        rows[v] = sim[v].tolist()
        spent += c
    return selected


def ceg_naive(sim, row_sums, costs, budget, gamma, per_cost, unit_budget=False):
    n = len(costs)
    sim = np.asarray(sim, dtype=np.float64)
    costs = np.asarray(costs, dtype=np.float64)
    diag = np.diagonal(sim).copy()
    step_cost = np.ones(n) if unit_budget else costs
    denom = np.maximum(costs, COST_FLOOR) if per_cost else None
    cov = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    selected = []
    spent = 0.0
    while True:
        feasible = alive & (spent + step_cost <= budget)
        if not feasible.any():
            break
        gain = gamma * row_sums - 2.0 * cov - diag
        score = gain / denom if per_cost else gain
        score = np.where(feasible, score, -np.inf)
        v = int(np.argmax(score))
        if score[v] <= 0.0:
            break
        selected.append(v)
        alive[v] = False
        spent += float(step_cost[v])
        cov += sim[v]
    return selected
