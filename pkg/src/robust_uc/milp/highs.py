"""HiGHS backend (through scipy) behind the same contracts as the native engine."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import (DEFAULT_GAP, EQ, GE, INFEASIBLE, INT_TOL, ITERATION_LIMIT, LE, OPTIMAL,
                    UNBOUNDED, LazyCallback, LinearProgram, SolveReport)

_LP_STATUS = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}


def solve_lp_highs(lp: LinearProgram) -> SolveReport:
    sign = 1.0 if lp.sense == "min" else -1.0
    A = lp.A
    le, ge, eq = lp.senses == LE, lp.senses == GE, lp.senses == EQ
    ub_rows = np.flatnonzero(le | ge)
    flip = np.where(ge[ub_rows], -1.0, 1.0)
    A_ub = sp.diags(flip) @ A[ub_rows] if ub_rows.size else None
    b_ub = flip * lp.rhs[ub_rows] if ub_rows.size else None
    eq_rows = np.flatnonzero(eq)
    A_eq = A[eq_rows] if eq_rows.size else None
    b_eq = lp.rhs[eq_rows] if eq_rows.size else None
    bounds = np.column_stack([lp.lb, lp.ub])
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u)
              for l, u in bounds]
    res = linprog(sign * lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs")
    status = _LP_STATUS.get(res.status, INFEASIBLE)
    if status != OPTIMAL:
        return SolveReport(status, backend="highs")
    duals = np.zeros(lp.num_rows)
    if ub_rows.size:
        duals[ub_rows] = sign * flip * res.ineqlin.marginals
    if eq_rows.size:
        duals[eq_rows] = sign * res.eqlin.marginals
    x = np.clip(res.x, lp.lb, lp.ub)
    obj = lp.objective_value(x)
    return SolveReport(OPTIMAL, obj, x, duals, 0.0, obj, iterations=int(res.nit), backend="highs")


def _milp_once(lp: LinearProgram, gap_tol, node_limit):
    sign = 1.0 if lp.sense == "min" else -1.0
    lo = np.where(lp.senses == LE, -np.inf, lp.rhs)
    hi = np.where(lp.senses == GE, np.inf, lp.rhs)
    cons = [LinearConstraint(lp.A, lo, hi)] if lp.num_rows else []
    opts = {"mip_rel_gap": gap_tol, "disp": False}
    if node_limit is not None:
        opts["node_limit"] = int(node_limit)
    return milp(sign * lp.c, constraints=cons, integrality=lp.integrality.astype(int),
                bounds=Bounds(lp.lb, lp.ub), options=opts)


def solve_milp_highs(lp: LinearProgram, lazy_cuts: LazyCallback | None = None,
                     gap_tol: float = DEFAULT_GAP, node_limit: int | None = None,
                     max_rounds: int = 1000) -> SolveReport:
    """Solve with HiGHS; lazy cuts are handled by re-solving with the accumulated pool."""
    sign = 1.0 if lp.sense == "min" else -1.0
    pool = []
    accepted = []
    nodes = 0
    current = lp
    for _ in range(max_rounds):
        res = _milp_once(current, gap_tol, node_limit)
        nodes += int(getattr(res, "mip_node_count", 0) or 0)
        if res.x is None:
            if res.status == 1:
                return SolveReport(ITERATION_LIMIT, nodes=nodes, cuts=pool, backend="highs")
            status = UNBOUNDED if res.status == 3 else INFEASIBLE
            # HiGHS sometimes reports "infeasible or unbounded" as status 2/4
            return SolveReport(status, nodes=nodes, cuts=pool, backend="highs")
        x = np.clip(res.x, lp.lb, lp.ub)
        ints = lp.integrality
        near = np.abs(x[ints] - np.round(x[ints])) <= INT_TOL * 10
        x[ints] = np.where(near, np.round(x[ints]), x[ints])
        new_cuts = list(lazy_cuts(x) or []) if lazy_cuts is not None else []
        new_cuts = [c for c in new_cuts if c.violation(x) > 1e-9]
        if new_cuts:
            pool.extend(new_cuts)
            A = np.vstack([c.coef for c in new_cuts])
            current = current.with_rows(A, [c.sense for c in new_cuts], [c.rhs for c in new_cuts])
            continue
        accepted.append(x)
        dual_bound = res.get("mip_dual_bound")
        bound = sign * float(res.fun if dual_bound is None else dual_bound)
        gap = float(res.get("mip_gap") or 0.0)
        status = OPTIMAL if res.status == 0 else ITERATION_LIMIT
        rep = SolveReport(status, lp.objective_value(x), x, None, gap, bound, nodes=nodes,
                          cuts=pool, accepted=accepted, backend="highs")
        return rep
    return SolveReport(ITERATION_LIMIT, nodes=nodes, cuts=pool, backend="highs")
