# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled cost-effective greedy kernels.

Mirrors ``_ceg_py`` operation for operation; the build disables FP
contraction so the two backends stay bit-identical.
"""
import numpy as np

from libcpp.pair cimport pair
from libcpp.queue cimport priority_queue
from libcpp.vector cimport vector

cdef double COST_FLOOR = 1e-9


cdef inline double _score(double gamma, double rs, double cov, double d,
                          double denom, bint per_cost) nogil:
    cdef double gain = gamma * rs - 2.0 * cov - d
    if per_cost:
        return gain / denom
    return gain


def ceg_lazy(double[:, ::1] sim, double[::1] row_sums, double[::1] costs,
             double budget, double gamma, bint per_cost, bint unit_budget=False):
    cdef Py_ssize_t n = costs.shape[0]
    cdef Py_ssize_t v, l, i, k
    cdef double c, acc, score, spent = 0.0
    cdef vector[double] cov = vector[double](n, 0.0)
    cdef vector[double] denom = vector[double](n, 1.0)
    cdef vector[Py_ssize_t] seen = vector[Py_ssize_t](n, 0)
    cdef vector[Py_ssize_t] selected
    # key (score, -index): max-heap pops highest score, then lowest index
    cdef priority_queue[pair[double, Py_ssize_t]] heap
    cdef pair[double, Py_ssize_t] top

    with nogil:
        for v in range(n):
            if per_cost:
                denom[v] = costs[v] if costs[v] > COST_FLOOR else COST_FLOOR
            score = _score(gamma, row_sums[v], 0.0, sim[v, v], denom[v], per_cost)
            heap.push(pair[double, Py_ssize_t](score, -v))

        while not heap.empty():
            top = heap.top()
            heap.pop()
            v = -top.second
            c = 1.0 if unit_budget else costs[v]
            if spent + c > budget:
                continue
            k = <Py_ssize_t>selected.size()
            if seen[v] < k:
                acc = cov[v]
                for i in range(seen[v], k):
                    l = selected[i]
                    acc += sim[l, v]
                cov[v] = acc
                seen[v] = k
                score = _score(gamma, row_sums[v], acc, sim[v, v], denom[v], per_cost)
                heap.push(pair[double, Py_ssize_t](score, -v))
                continue
            if top.first <= 0.0:
                break
            selected.push_back(v)
            spent += c

    return [selected[i] for i in range(<Py_ssize_t>selected.size())]


def ceg_naive(double[:, ::1] sim, double[::1] row_sums, double[::1] costs,
              double budget, double gamma, bint per_cost, bint unit_budget=False):
    cdef Py_ssize_t n = costs.shape[0]
    cdef Py_ssize_t v, u, best
    cdef double c, score, best_score, spent = 0.0
    cdef vector[double] cov = vector[double](n, 0.0)
    cdef vector[double] denom = vector[double](n, 1.0)
    cdef vector[char] alive = vector[char](n, 1)
    cdef vector[Py_ssize_t] selected

    with nogil:
        for v in range(n):
            if per_cost:
                denom[v] = costs[v] if costs[v] > COST_FLOOR else COST_FLOOR
        while True:
            best = -1
            best_score = 0.0
            for v in range(n):
                if not alive[v]:
                    continue
                c = 1.0 if unit_budget else costs[v]
                if not (spent + c <= budget):
                    continue
                score = _score(gamma, row_sums[v], cov[v], sim[v, v], denom[v], per_cost)
                if best < 0 or score > best_score:
                    best = v
                    best_score = score
            if best < 0 or best_score <= 0.0:
                break
            selected.push_back(best)
            alive[best] = 0
            spent += 1.0 if unit_budget else costs[best]
            for u in range(n):
                cov[u] += sim[best, u]

    return [selected[i] for i in range(<Py_ssize_t>selected.size())]
