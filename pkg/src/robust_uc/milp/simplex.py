"""Dense revised simplex for bounded-variable LPs.

The problem is put in computational form: every row ``i`` gets an activity
column ``r_i`` (``A x - r = 0``) whose bounds encode the row sense, plus an
artificial column used only in phase one. Nonbasic columns sit at a bound
(or at zero when free). Pricing is Dantzig's rule; after a run of degenerate
pivots the method switches to Bland's rule until progress resumes.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve, LinAlgError

from .model import (EQ, GE, INFEASIBLE, ITERATION_LIMIT, LE, OPTIMAL, UNBOUNDED,
                    LinearProgram, SolveReport)

OPT_TOL = 1e-9
PIV_TOL = 1e-9
PHASE1_TOL = 1e-8
DEGENERATE_RUN = 30


class _Tableau:
    def __init__(self, M, lo, hi, x, basis):
        self.M = M
        self.lo = lo
        self.hi = hi
        self.x = x
        self.basis = basis
        self.is_basic = np.zeros(M.shape[1], dtype=bool)
        self.is_basic[basis] = True
        self.iterations = 0

    def _factor(self):
        B = self.M[:, self.basis]
        try:
            return lu_factor(B, check_finite=False)
        except (LinAlgError, ValueError) as exc:  # pragma: no cover - defensive
            raise LinAlgError("singular basis") from exc

    def _recompute_basics(self, lu):
        nb = ~self.is_basic
        rhs = -(self.M[:, nb] @ self.x[nb])
        self.x[self.basis] = lu_solve(lu, rhs, check_finite=False)

    def run(self, cost, max_iter):
        """Minimise ``cost . x``; returns 'optimal', 'unbounded' or 'iteration-limit'."""
        degenerate = 0
        bland = False
        n_cols = self.M.shape[1]
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            lu = self._factor()
            self._recompute_basics(lu)
            pi = lu_solve(lu, cost[self.basis], trans=1, check_finite=False)
            d = cost - self.M.T @ pi
            d[self.is_basic] = 0.0

            x, lo, hi = self.x, self.lo, self.hi
            can_inc = (~self.is_basic) & (x < hi - 1e-12)
            can_dec = (~self.is_basic) & (x > lo + 1e-12)
            score = np.where(can_inc & (d < -OPT_TOL), -d, 0.0)
            score = np.maximum(score, np.where(can_dec & (d > OPT_TOL), d, 0.0))
            candidates = np.flatnonzero(score > 0.0)
            if candidates.size == 0:
                self.pi = pi
                self.d = d
                return OPTIMAL
            if bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(score[candidates])])
            direction = 1.0 if (d[j] < 0.0 and can_inc[j]) else -1.0

            alpha = lu_solve(lu, self.M[:, j], check_finite=False)
            delta = -direction * alpha
            xb = x[self.basis]
            lob, hib = lo[self.basis], hi[self.basis]
            ratios = np.full(delta.size, np.inf)
            dec = delta < -PIV_TOL
            inc = delta > PIV_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                r_dec = np.where(dec & np.isfinite(lob), (xb - lob) / -delta, np.inf)
                r_inc = np.where(inc & np.isfinite(hib), (hib - xb) / delta, np.inf)
            ratios = np.minimum(r_dec, r_inc)
            ratios = np.maximum(ratios, 0.0)

            t_flip = hi[j] - lo[j] if np.isfinite(lo[j]) and np.isfinite(hi[j]) else np.inf
            t_min = ratios.min() if ratios.size else np.inf
            if not np.isfinite(t_min) and not np.isfinite(t_flip):
                self.ray_col = j
                return UNBOUNDED

            self.iterations += 1
            if t_flip <= t_min:
                x[j] = hi[j] if direction > 0 else lo[j]
                step = t_flip
            else:
                ties = np.flatnonzero(ratios <= t_min + 1e-12)
                if bland:
                    k = int(ties[np.argmin(np.asarray(self.basis)[ties])])
                else:
                    mags = np.abs(delta[ties])
                    k = int(ties[np.argmax(mags)])
                step = ratios[k]
                leave = self.basis[k]
                x[self.basis] = xb + delta * step
                x[j] = x[j] + direction * step
                x[leave] = lo[leave] if delta[k] < 0 else hi[leave]
                self.is_basic[leave] = False
                self.is_basic[j] = True
                self.basis[k] = j

            if step <= 1e-12:
                degenerate += 1
                if degenerate >= DEGENERATE_RUN:
                    bland = True
            else:
                degenerate = 0
                bland = False


def _solve_without_rows(lp, c):
    x = np.zeros(lp.num_vars)
    for j, cj in enumerate(c):
        if cj > 0:
            x[j] = lp.lb[j]
        elif cj < 0:
            x[j] = lp.ub[j]
        else:
            x[j] = lp.lb[j] if np.isfinite(lp.lb[j]) else (lp.ub[j] if np.isfinite(lp.ub[j]) else 0.0)
        if not np.isfinite(x[j]):
            return None
    return x


def solve_lp_simplex(lp: LinearProgram, max_iter: int | None = None) -> SolveReport:
    """Solve the continuous relaxation of ``lp`` with the native simplex."""
    sign = 1.0 if lp.sense == "min" else -1.0
    c = sign * lp.c
    A = lp.A.toarray()
    n = lp.num_vars

    # empty rows are either trivially satisfied or make the problem infeasible
    nonempty = np.any(A != 0.0, axis=1)
    for i in np.flatnonzero(~nonempty):
        s, b = lp.senses[i], lp.rhs[i]
        if (s == LE and b < -1e-9) or (s == GE and b > 1e-9) or (s == EQ and abs(b) > 1e-9):
            return SolveReport(INFEASIBLE, backend="native")
    rows = np.flatnonzero(nonempty)
    A = A[rows]
    senses = lp.senses[rows]
    rhs = lp.rhs[rows]
    m = A.shape[0]

    if m == 0:
        x = _solve_without_rows(lp, c)
        if x is None:
            return SolveReport(UNBOUNDED, backend="native")
        duals = np.zeros(lp.num_rows)
        obj = lp.objective_value(x)
        return SolveReport(OPTIMAL, obj, x, duals, 0.0, obj, backend="native")

    rlo = np.where(senses == LE, -np.inf, rhs)
    rhi = np.where(senses == GE, np.inf, rhs)

    x0 = np.where(np.isfinite(lp.lb), lp.lb, np.where(np.isfinite(lp.ub), lp.ub, 0.0))
    act = A @ x0
    r0 = np.clip(act, rlo, rhi)
    inside = np.abs(r0 - act) <= 1e-12
    sigma = np.where(r0 - act >= 0.0, 1.0, -1.0)
    art0 = np.abs(r0 - act)

    M = np.hstack([A, -np.eye(m), np.diag(sigma)])
    lo = np.concatenate([lp.lb, rlo, np.zeros(m)])
    hi = np.concatenate([lp.ub, rhi, np.where(inside, 0.0, np.inf)])
    x = np.concatenate([x0, r0, np.where(inside, 0.0, art0)])
    basis = [n + i if inside[i] else n + m + i for i in range(m)]
    # a basic activity column takes the value of the row activity
    x[n:n + m] = np.where(inside, act, r0)

    if max_iter is None:
        max_iter = 200 * (n + 2 * m) + 1000
    tab = _Tableau(M, lo, hi, x, basis)

    if not inside.all():
        cost1 = np.concatenate([np.zeros(n + m), np.where(inside, 0.0, 1.0)])
        status = tab.run(cost1, max_iter)
        if status == ITERATION_LIMIT:
            return SolveReport(ITERATION_LIMIT, iterations=tab.iterations, backend="native")
        infeas = float(tab.x[n + m:].sum())
        if infeas > PHASE1_TOL * max(1.0, np.abs(rhs).max(initial=0.0)):
            return SolveReport(INFEASIBLE, iterations=tab.iterations, backend="native")
    tab.hi[n + m:] = 0.0
    tab.lo[n + m:] = 0.0
    nb_art = (~tab.is_basic[n + m:])
    tab.x[n + m:][nb_art] = 0.0

    cost2 = np.concatenate([c, np.zeros(2 * m)])
    status = tab.run(cost2, max_iter)
    if status == UNBOUNDED:
        return SolveReport(UNBOUNDED, iterations=tab.iterations, backend="native")
    if status == ITERATION_LIMIT:
        return SolveReport(ITERATION_LIMIT, iterations=tab.iterations, backend="native")

    xs = np.clip(tab.x[:n], lp.lb, lp.ub)
    duals = np.zeros(lp.num_rows)
    duals[rows] = sign * tab.pi
    obj = lp.objective_value(xs)
    return SolveReport(OPTIMAL, obj, xs, duals, 0.0, obj, iterations=tab.iterations,
                       backend="native")
