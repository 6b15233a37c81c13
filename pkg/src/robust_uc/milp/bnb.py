"""Best-bound branch and bound over the native simplex."""
from __future__ import annotations

import heapq
import itertools
import math

import numpy as np

from .model import (DEFAULT_GAP, INFEASIBLE, INT_TOL, ITERATION_LIMIT, OPTIMAL, UNBOUNDED,
                    LazyCallback, LinearProgram, SolveReport)
from .simplex import solve_lp_simplex


def _relative_gap(incumbent, bound):
    if not math.isfinite(incumbent):
        return math.inf
    return max(0.0, incumbent - bound) / max(abs(incumbent), 1e-10)


def _stack_cuts(relax, cuts):
    if not cuts:
        return relax
    A = np.vstack([c.coef for c in cuts])
    return relax.with_rows(A, [c.sense for c in cuts], [c.rhs for c in cuts])


def branch_and_bound(lp: LinearProgram, lazy_cuts: LazyCallback | None = None,
                     gap_tol: float = DEFAULT_GAP, node_limit: int = 100_000) -> SolveReport:
    """Minimise (or maximise) a binary MILP.

    Nodes are explored best-bound first; the branching variable is the most
    fractional binary, ties broken by lowest index. ``lazy_cuts`` is called on
    every integral LP point and may return rows that cut it off.
    """
    sign = 1.0 if lp.sense == "min" else -1.0
    base = lp.relaxation()
    ints = np.flatnonzero(lp.integrality)
    pool = []
    accepted = []
    counter = itertools.count()

    incumbent, inc_x = math.inf, None
    heap = [(-math.inf, next(counter), lp.lb.copy(), lp.ub.copy())]
    nodes = 0
    lp_iters = 0
    limited = False

    while heap:
        bound, _, lb, ub = heapq.heappop(heap)
        if bound >= incumbent - gap_tol * max(abs(incumbent), 1e-10) - 1e-9:
            heap.clear()
            break
        if nodes >= node_limit:
            heapq.heappush(heap, (bound, next(counter), lb, ub))
            limited = True
            break
        nodes += 1
        while True:
            rep = solve_lp_simplex(_stack_cuts(base.with_bounds(lb, ub), pool))
            lp_iters += rep.iterations
            if rep.status == UNBOUNDED and nodes == 1:
                return SolveReport(UNBOUNDED, nodes=nodes, backend="native")
            if rep.status != OPTIMAL:
                break
            obj = sign * rep.objective
            if obj >= incumbent - gap_tol * max(abs(incumbent), 1e-10) - 1e-9:
                rep = None
                break
            xi = rep.x[ints]
            frac = np.abs(xi - np.round(xi))
            if np.any(frac > INT_TOL):
                # most fractional, lowest index on ties
                score = np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)
                k = int(np.argmax(score))
                j = ints[k]
                lb_up, ub_dn = lb.copy(), ub.copy()
                ub_dn[j] = math.floor(rep.x[j])
                lb_up[j] = math.ceil(rep.x[j])
                heapq.heappush(heap, (obj, next(counter), lb, ub_dn))
                heapq.heappush(heap, (obj, next(counter), lb_up, ub))
                rep = None
                break
            x = rep.x.copy()
            x[ints] = np.round(x[ints])
            new_cuts = list(lazy_cuts(x) or []) if lazy_cuts is not None else []
            new_cuts = [c for c in new_cuts if c.violation(x) > 1e-9]
            if new_cuts:
                pool.extend(new_cuts)
                continue
            accepted.append(x)
            incumbent, inc_x = obj, x
            break

    best_bound = min([b for b, *_ in heap], default=incumbent)
    best_bound = min(best_bound, incumbent)
    if inc_x is None:
        status = ITERATION_LIMIT if limited else INFEASIBLE
        return SolveReport(status, nodes=nodes, iterations=lp_iters, cuts=pool, backend="native")
    gap = _relative_gap(incumbent, best_bound)
    status = ITERATION_LIMIT if (limited and gap > gap_tol) else OPTIMAL
    rep = SolveReport(status, lp.objective_value(inc_x), inc_x, None, gap, sign * best_bound,
                      nodes=nodes, iterations=lp_iters, cuts=pool, accepted=accepted,
                      backend="native")
    return rep
