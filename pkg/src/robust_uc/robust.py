"""Two-stage robust unit commitment by column-and-constraint generation.

The adversarial problem ``max_u min_y {F.y : A y >= B x + D u + E}`` is solved
as a MILP over the KKT system of the inner LP (complementarity through big-M
binaries). Ellipsoidal sets enter through a tight lifted polyhedral outer
approximation of the whitened ball; tangent cuts refine it whenever the
maximiser still falls outside the ellipsoid.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .milp import EQ, GE, LE, LinearProgram, ModelBuilder, audit_big_m, big_m_for_row, solve_lp, solve_milp
from .system import (CommitmentSchedule, CompactTwoStage, PowerSystem, add_predispatch_block,
                     build_compact_form, predispatch_cost, redispatch_value)
from .uncertainty import (BoxSet, CostLevelSet, EllipsoidCapSet, build_ellipsoid_variant,
                          reconstruct_set)

log = logging.getLogger(__name__)

DUAL_BIG_M = 1e4
FEAS_TOL = 1e-6
SUB_GAP = 1e-9
MAX_CUT_ROUNDS = 300
CUT_GAP = 1e-5
ASCENT_STEPS = 8
BALL_LEVELS = 12
DEDUP_TOL = 1e-6


@dataclass
class SubproblemResult:
    u: np.ndarray
    value: float
    status: str  # "optimal", "infeasible-recourse" or "failed"
    bound: float = math.nan
    rounds: int = 0
    dual_alerts: int = 0


@dataclass
class CcgState:
    scenarios: list = field(default_factory=list)  # (u, needs_cost_link)
    lb: float = -math.inf
    ub: float = math.inf
    iterations: int = 0
    log: list = field(default_factory=list)
    converged: bool = False


@dataclass
class RobustSolution:
    x: CommitmentSchedule | None
    x_vector: np.ndarray | None
    objective: float
    first_stage_cost: float
    worst_case_value: float
    worst_u: np.ndarray | None
    state: CcgState

    @property
    def converged(self):
        return self.state.converged

    def to_dict(self):
        return {
            "objective": self.objective,
            "first_stage_cost": self.first_stage_cost,
            "worst_case_value": self.worst_case_value,
            "converged": self.converged,
            "iterations": self.state.iterations,
            "schedule": None if self.x is None else self.x.to_dict(),
            "worst_u": None if self.worst_u is None else self.worst_u.tolist(),
            "log": self.state.log,
        }


# --- master ---------------------------------------------------------------

def master_problem(sys: PowerSystem, u_hat, scenarios, compact: CompactTwoStage | None = None,
                   backend=None, gap=SUB_GAP):
    """``min C.x + eta`` over the enumerated scenarios; returns ``(x, eta, LB, report)``.

    ``scenarios`` holds ``u`` vectors or ``(u, needs_cost_link)`` pairs; scenarios
    added for feasibility only constrain their own recourse copy.
    """
    compact = compact or build_compact_form(sys)
    mb = ModelBuilder()
    blocks = add_predispatch_block(mb, sys, u_hat)
    x_idx = np.concatenate([blocks[b].ravel() for b in ("theta", "theta_up", "theta_dn", "p",
                                                        "r_up", "r_dn")])
    pairs = [(s, True) if not isinstance(s, tuple) else s for s in scenarios]
    any_cost = any(link for _, link in pairs)
    eta = mb.add_var(0.0, np.inf if any_cost else 0.0, cost=1.0, name="eta")
    negB = -compact.B
    for k, (u, link) in enumerate(pairs):
        y = mb.add_vars(compact.n_y, 0.0, np.inf, name=f"y{k}")
        rhs = compact.D @ np.asarray(u, float).ravel() + compact.E
        mb.add_block_rows([(compact.A, y), (negB, x_idx)], GE, rhs, name=f"recourse{k}")
        if link:
            mb.add_row(np.r_[eta, y], np.r_[1.0, -compact.F], GE, 0.0, name=f"eta_link{k}")
    lp = mb.build()
    rep = solve_milp(lp, gap_tol=gap, backend=backend)
    if not rep.optimal:
        return None, math.nan, math.nan, rep
    lb = rep.bound if math.isfinite(rep.bound) else rep.objective
    return rep.x[x_idx], rep.x[eta], min(lb, rep.objective), rep


# --- KKT machinery ----------------------------------------------------------

def _kkt_block(mb: ModelBuilder, G, c, h0, H, w_ub, lam_ub, u_idx, u_lb, u_ub, tag, pairs=()):
    """KKT conditions of ``min c.w s.t. G w >= h0 + H u, w >= 0`` inside ``mb``.

    ``w_ub`` and ``lam_ub`` are valid a-priori bounds on some optimal primal and
    dual pair; they size the complementarity big-Ms. ``pairs`` lists row pairs
    forming one equality; at most one of them needs a positive multiplier.
    """
    G = sp.csr_matrix(G)
    H = sp.csr_matrix(H)
    m, n = G.shape
    w = mb.add_vars(n, 0.0, w_ub, name=f"{tag}_w")
    lam = mb.add_vars(m, 0.0, lam_ub, name=f"{tag}_lam")
    mb.add_block_rows([(G, w), (-H, u_idx)], GE, h0, name=f"{tag}_primal")
    mb.add_rows(G.T, lam, LE, c, name=f"{tag}_dual")
    cols = np.r_[w, u_idx]
    var_lb = np.concatenate([np.zeros(n), u_lb])
    var_ub = np.concatenate([np.asarray(w_ub, float), u_ub])
    GH = sp.hstack([G, -H]).tocsr()
    z_row = mb.add_vars(m, 0.0, 1.0, binary=True, name=f"{tag}_zr")
    for r in range(m):
        lo, hi = GH.indptr[r], GH.indptr[r + 1]
        j, a = GH.indices[lo:hi], GH.data[lo:hi]
        big = big_m_for_row((var_lb[j], var_ub[j]), (a, h0[r]))
        mb.add_row([lam[r], z_row[r]], [1.0, -lam_ub[r]], LE, 0.0)
        # row activity - h0 <= M (1 - z)
        mb.add_row(np.r_[cols[j], z_row[r]], np.r_[a, big], LE, big + h0[r])
    for a, b in pairs:
        mb.add_row([z_row[a], z_row[b]], [1.0, 1.0], LE, 1.0)
    GT = G.T.tocsr()
    for j in range(n):
        if w_ub[j] <= 0:
            continue
        lo, hi = GT.indptr[j], GT.indptr[j + 1]
        coef = GT.data[lo:hi]
        md = big_m_for_row((np.zeros(hi - lo), np.asarray(lam_ub)[GT.indices[lo:hi]]), (coef, c[j]))
        zc = mb.add_var(0.0, 1.0, binary=True, name=f"{tag}_zc{j}")
        mb.add_row([w[j], zc], [1.0, -w_ub[j]], LE, 0.0)
        # c_j - G_j^T lam <= md (1 - zc)
        mb.add_row(np.r_[lam[GT.indices[lo:hi]], zc], np.r_[-coef, md], LE, md - c[j])
    return w, lam


def _needed_rows(compact: CompactTwoStage, x_vec, box: BoxSet):
    """Rows that can bind somewhere on ``0 <= y <= r(x)``, ``u`` in the box.

    Caps and balance rows are always kept; a line row whose activity can never
    drop below its right-hand side is implied by the caps and is dropped.
    """
    keep = np.ones(compact.n_rows, bool)
    y_ub = compact.y_upper(x_vec)
    h0 = compact.B @ x_vec + compact.E
    A, D = compact.A.tocsr(), compact.D.tocsr()
    for r, name in enumerate(compact.row_names):
        if not name.startswith("flow_"):
            continue
        a = A.getrow(r)
        d = D.getrow(r)
        lo_y = float(np.minimum(a.data * 0.0, a.data * y_ub[a.indices]).sum())
        hi_u = float(np.where(d.data > 0, d.data * box.upper[d.indices],
                              d.data * box.lower[d.indices]).sum())
        # a.y >= h0 + d.u holds everywhere when min(a.y) >= max(h0 + d.u)
        if lo_y >= h0[r] + hi_u + 1e-9:
            keep[r] = False
    return keep


def _balance_pairs(names):
    where = {n: k for k, n in enumerate(names)}
    out = []
    for n, k in where.items():
        if n.startswith("balance_lo["):
            other = "balance_hi[" + n[len("balance_lo["):]
            if other in where:
                out.append((k, where[other]))
    return out


def _u_box(uset) -> BoxSet:
    """Coordinate bounds of ``uset``: its box, tightened by the ellipsoid's extent."""
    box = uset.box
    if isinstance(uset, EllipsoidCapSet) and uset.alpha > 0:
        half = np.sqrt(uset.alpha * np.clip(np.diag(uset.cov), 0.0, None)) * (1 + 1e-9)
        lo = np.maximum(box.lower, uset.center - half)
        hi = np.minimum(box.upper, uset.center + half)
        if np.all(lo <= hi):
            return BoxSet(lo, hi)
    return box


def _add_uncertainty_rows(mb: ModelBuilder, uset, compact: CompactTwoStage):
    """Variables ``u`` restricted to the polyhedral part of ``uset``."""
    box = uset.box
    if not (np.all(np.isfinite(box.lower)) and np.all(np.isfinite(box.upper))):
        raise ValueError("the robust solver needs a finite box around the uncertainty set")
    tight = _u_box(uset)
    lo, hi = tight.lower.copy(), tight.upper.copy()
    if isinstance(uset, EllipsoidCapSet) and uset.alpha <= 0:
        if not box.contains(uset.center):
            raise ValueError("uncertainty set is empty: zero radius and center outside the box")
        lo = hi = uset.center.copy()
    u = mb.add_vars(box.dim, lo, hi, name="u")
    if isinstance(uset, CostLevelSet) and not uset.is_box:
        y0 = mb.add_vars(compact.n_y, 0.0, compact.y_upper(uset.x0), name="y_anchor")
        rhs = compact.B @ uset.x0 + compact.E
        mb.add_block_rows([(compact.A, y0), (-compact.D, u)], GE, rhs, name="anchor")
        mb.add_row(y0, compact.F, LE, uset.beta, name="cost_level")
    if isinstance(uset, EllipsoidCapSet) and uset.alpha > 0:
        # whitened coordinates: L xi = u - center with cov = L L^T
        L = np.linalg.cholesky(uset.cov)
        xi = mb.add_vars(box.dim, -np.inf, np.inf, name="xi")
        mb.add_block_rows([(sp.csr_matrix(L), xi), (-sp.eye(box.dim), u)], EQ, -uset.center,
                          name="whiten")
        _add_ball(mb, list(xi), math.sqrt(uset.alpha), BALL_LEVELS)
    return u


def _add_disc(mb: ModelBuilder, a, b, levels):
    """New variable ``r`` with ``|(a, b)| <= r`` through nested rotations.

    Exact for the inner direction; any feasible point has ``|(a, b)| <= r /
    cos(pi / 2^(levels + 1))``.
    """
    xi = mb.add_var(0.0, np.inf, name="disc_x")
    eta = mb.add_var(0.0, np.inf, name="disc_y")
    mb.add_row([xi, a], [1.0, -1.0], GE, 0.0)
    mb.add_row([xi, a], [1.0, 1.0], GE, 0.0)
    mb.add_row([eta, b], [1.0, -1.0], GE, 0.0)
    mb.add_row([eta, b], [1.0, 1.0], GE, 0.0)
    for j in range(1, levels + 1):
        ang = math.pi / 2 ** (j + 1)
        cs, sn = math.cos(ang), math.sin(ang)
        nx = mb.add_var(0.0, np.inf, name="disc_x")
        ny = mb.add_var(0.0, np.inf, name="disc_y")
        mb.add_row([nx, xi, eta], [1.0, -cs, -sn], EQ, 0.0)
        mb.add_row([ny, xi, eta], [1.0, sn, -cs], GE, 0.0)
        mb.add_row([ny, xi, eta], [1.0, -sn, cs], GE, 0.0)
        xi, eta = nx, ny
    r = mb.add_var(0.0, np.inf, name="disc_r")
    mb.add_row([r, xi], [1.0, -1.0], GE, 0.0)
    mb.add_row([eta, xi], [1.0, -math.tan(math.pi / 2 ** (levels + 1))], LE, 0.0)
    return r


def _add_ball(mb: ModelBuilder, coords, radius, levels):
    """Polyhedral outer approximation of ``|coords|_2 <= radius`` by a tree of discs."""
    if len(coords) == 1:
        mb.add_row([coords[0]], [1.0], LE, radius)
        mb.add_row([coords[0]], [1.0], GE, -radius)
        return
    nodes = list(coords)
    while len(nodes) > 1:
        nxt = [_add_disc(mb, nodes[k], nodes[k + 1], levels) for k in range(0, len(nodes) - 1, 2)]
        if len(nodes) % 2:
            nxt.append(nodes[-1])
        nodes = nxt
    mb.add_row([nodes[0]], [1.0], LE, radius)


def _tangent_row(uset: EllipsoidCapSet, v):
    """Row ``(v - c)^T Sigma^{-1} u <= alpha + (v - c)^T Sigma^{-1} c`` for boundary point ``v``."""
    s = uset.solve(np.asarray(v, float) - uset.center)
    return s, uset.alpha + float(s @ uset.center)


def _into_set(uset: EllipsoidCapSet, v):
    """Clip ``v`` to the box and pull it radially into the ellipsoid."""
    v = np.clip(v, uset.box.lower, uset.box.upper)
    if uset.radius(v) > uset.alpha:
        v = uset.boundary_point(v)
    return v


def _ascend(uset: EllipsoidCapSet, u0, value_grad, steps: int = ASCENT_STEPS):
    """Local ascent of a convex piecewise-linear value over the set.

    Each step jumps to the maximiser of the current linear piece; returns the
    visited points with their values.
    """
    out = []
    u = _into_set(uset, u0)
    val, g = value_grad(u)
    out.append((u, val))
    for _ in range(steps):
        if g is None or not math.isfinite(val):
            break
        nxt = _into_set(uset, uset.linear_maximizer(g))
        nval, ng = value_grad(nxt)
        out.append((nxt, nval))
        if nval <= val + 1e-9 * max(1.0, abs(val)):
            break
        u, val, g = nxt, nval, ng
    return out


def _maximize(build, uset, compact, value_grad, backend, gap, threshold=None, rel_tol=CUT_GAP):
    """Maximise the inner LP value over ``uset`` via its KKT MILP.

    ``build(mb, u_idx)`` adds the KKT block and returns ``(objective coefs, w idx, lam idx,
    lam_ub)``; ``value_grad(u)`` evaluates the inner LP and a supergradient in ``u``.
    With ``threshold`` set the loop stops as soon as the answer to "is the
    maximum above threshold" is settled.
    """
    ellipsoid = isinstance(uset, EllipsoidCapSet) and uset.alpha > 0
    mb = ModelBuilder(sense="max")
    u_idx = _add_uncertainty_rows(mb, uset, compact)
    obj, w_idx, lam_idx, lam_ub = build(mb, u_idx)
    mb.set_cost(w_idx, obj)
    base = mb.build()

    best_u, best_val = None, -math.inf
    rounds = 0
    bound = math.inf
    alerts = 0  # filled in by callers that can audit their multipliers
    while rounds < MAX_CUT_ROUNDS:
        rounds += 1
        lp = base
        if ellipsoid and uset.cuts:
            rows = np.zeros((len(uset.cuts), base.num_vars))
            rhs = np.empty(len(uset.cuts))
            for k, v in enumerate(uset.cuts):
                s, r = _tangent_row(uset, v)
                rows[k, u_idx] = s
                rhs[k] = r
            lp = base.with_rows(rows, [LE] * len(rhs), rhs)
        t0 = time.perf_counter()
        rep = solve_milp(lp, gap_tol=gap, backend=backend)
        log.debug("round %d: %s obj=%.6g best=%.6g nodes=%d %.3fs", rounds, rep.status,
                  rep.objective, best_val, rep.nodes, time.perf_counter() - t0)
        if not rep.optimal:
            if best_u is not None:
                break
            return SubproblemResult(None, math.nan, "failed", rounds=rounds)
        u_star = rep.x[u_idx]
        bound = min(bound, rep.bound if math.isfinite(rep.bound) else rep.objective)
        if not ellipsoid:
            return SubproblemResult(u_star, value_grad(u_star)[0], "optimal", bound, rounds, alerts)
        if uset.radius(u_star) <= uset.alpha * (1 + 1e-6) + 1e-9:
            # the lifted ball overshoots by a hair; snap onto the surface
            u_star = _into_set(uset, u_star)
            val = value_grad(u_star)[0]
            if val >= best_val:
                best_u, best_val = u_star, val
            break
        for v, val in _ascend(uset, u_star, value_grad):
            if val > best_val:
                best_u, best_val = v, val
            bp = uset.boundary_point(v)
            if bp is not None:
                uset.cuts.append(bp)
        cut = uset.boundary_point(u_star)
        if cut is not None:
            uset.cuts.append(cut)
        if threshold is not None and (best_val > threshold or bound <= threshold):
            break
        if bound - best_val <= rel_tol * max(1.0, abs(bound)):
            break
    if best_u is None:
        return SubproblemResult(None, math.nan, "failed", bound, rounds, alerts)
    log.debug("cut loop: %d rounds, %d cuts", rounds, len(uset.cuts) if ellipsoid else 0)
    return SubproblemResult(best_u, best_val, "optimal", bound, rounds, alerts)


def _slack_rows(compact: CompactTwoStage):
    names = compact.row_names
    return np.array([not n.startswith(("p_up_cap", "p_dn_cap")) for n in names])


def _slack_lp(compact: CompactTwoStage, x_vec, u_vec) -> LinearProgram:
    """Least-slack LP: every non-cap row gets a unit-priced slack."""
    soft = _slack_rows(compact)
    m, n = compact.A.shape
    k = int(soft.sum())
    S = sp.csr_matrix((np.ones(k), (np.flatnonzero(soft), np.arange(k))), shape=(m, k))
    G = sp.hstack([compact.A, S]).tocsr()
    c = np.r_[np.zeros(n), np.ones(k)]
    return LinearProgram(c, G, np.full(m, GE), compact.rhs(x_vec, u_vec), np.zeros(n + k),
                         np.r_[compact.y_upper(x_vec), np.full(k, np.inf)], np.zeros(n + k, bool))


def slack_lp_value(compact: CompactTwoStage, x_vec, u_vec, backend=None) -> float:
    """Least total slack restoring ``A y >= B x + D u + E`` (caps kept hard)."""
    rep = solve_lp(_slack_lp(compact, x_vec, u_vec), backend=backend)
    return rep.objective if rep.optimal else math.inf


def _value_grad(compact: CompactTwoStage, make_lp, backend):
    """``u -> (LP value, D^T duals)``; the duals give a supergradient of the value in ``u``."""
    DT = compact.D.T.tocsr()

    def f(u):
        rep = solve_lp(make_lp(u), backend=backend)
        if not rep.optimal:
            return math.inf, None
        g = DT @ rep.duals[:compact.n_rows] if rep.duals is not None else None
        return rep.objective, g
    return f


def _reduced(compact: CompactTwoStage, x_vec, box: BoxSet):
    keep = _needed_rows(compact, x_vec, box)
    names = [n for n, k in zip(compact.row_names, keep) if k]
    A = compact.A.tocsr()[keep]
    H = compact.D.tocsr()[keep]
    h0 = (compact.B @ x_vec + compact.E)[keep]
    return keep, names, A, H, h0


def _slack_kkt(compact: CompactTwoStage, x_vec, box: BoxSet):
    """KKT data of the slack LP restricted to the rows that can bind.

    Returns ``(G, c, h0, H, w_ub, lam_ub, pairs, soft)``; the multiplier
    bounds are exact: soft rows by the unit slack price, caps by the column sums.
    """
    keep, names, A, H, h0 = _reduced(compact, x_vec, box)
    soft = np.array([not nm.startswith(("p_up_cap", "p_dn_cap")) for nm in names])
    m, n = A.shape
    k = int(soft.sum())
    S = sp.csr_matrix((np.ones(k), (np.flatnonzero(soft), np.arange(k))), shape=(m, k))
    G = sp.hstack([A, S]).tocsr()
    y_ub = compact.y_upper(x_vec)
    # slack never needs to exceed the row's reach over the box
    AH = sp.hstack([A, -H]).tocsr()
    lbs = np.r_[np.zeros(n), box.lower]
    ubs = np.r_[y_ub, box.upper]
    s_ub = np.empty(k)
    for j, r in enumerate(np.flatnonzero(soft)):
        lo, hi = AH.indptr[r], AH.indptr[r + 1]
        idx = AH.indices[lo:hi]
        s_ub[j] = big_m_for_row((lbs[idx], ubs[idx]), (AH.data[lo:hi], h0[r]))
    colsum = np.asarray(abs(A[soft]).sum(axis=0)).ravel()
    lam_ub = np.ones(m)
    for r in np.flatnonzero(~soft):
        # a vertex cap multiplier never exceeds the soft part of its column
        lam_ub[r] = max(colsum[A.getrow(r).indices[0]], 1.0)
    c = np.r_[np.zeros(n), np.ones(k)]
    return G, c, h0, H, np.r_[y_ub, s_ub], lam_ub, _balance_pairs(names), soft


def feasibility_subproblem(sys: PowerSystem, x_vec, uset, compact=None, backend=None, gap=SUB_GAP,
                           threshold=FEAS_TOL):
    """``max_u`` of the least slack needed to repair re-dispatch.

    The search stops once a point needing more than ``threshold`` slack is found
    or the bound proves none exists.
    """
    compact = compact or build_compact_form(sys)
    x_vec = np.asarray(x_vec, float)
    box = _u_box(uset)
    G, c, h0, H, w_ub, lam_ub, pairs, soft = _slack_kkt(compact, x_vec, box)

    def build(mb, u_idx):
        w, lam = _kkt_block(mb, G, c, h0, H, w_ub, lam_ub, u_idx, box.lower, box.upper, "feas",
                            pairs)
        return c, w, lam, lam_ub

    vg = _value_grad(compact, lambda u: _slack_lp(compact, x_vec, u), backend)
    if threshold is not None and isinstance(uset, EllipsoidCapSet) and uset.alpha > 0:
        hit = _search_violation(uset, H[soft], vg, threshold)
        if hit is not None:
            return hit
    return _maximize(build, uset, compact, vg, backend, gap, threshold=threshold)


def _search_violation(uset: EllipsoidCapSet, sens, value_grad, threshold):
    """Multi-start ascent for a point needing more than ``threshold`` slack.

    Starts at the center and at the set points pushing each soft row hardest in
    either direction. Returns ``None`` when nothing is found.
    """
    sens = sp.csr_matrix(sens).toarray()
    dirs = [s * g for g in sens if np.any(g) for s in (1.0, -1.0)]
    starts = [uset.center] + [uset.linear_maximizer(g) for g in dirs]
    for u0 in starts:
        v, val = max(_ascend(uset, u0, value_grad), key=lambda p: p[1])
        if val > threshold:
            return SubproblemResult(v, val, "optimal", math.inf, 0)
    return None


def worst_case_subproblem(sys: PowerSystem, x_vec, uset, compact=None, backend=None,
                          dual_big_m: float = DUAL_BIG_M, gap=SUB_GAP, check_feasibility=True):
    """``max_{u in set} min_y F.y``; an empty recourse polytope gives value ``+inf``."""
    compact = compact or build_compact_form(sys)
    x_vec = np.asarray(x_vec, float)
    if check_feasibility:
        feas = feasibility_subproblem(sys, x_vec, uset, compact, backend, gap)
        if feas.status != "optimal":
            return SubproblemResult(None, math.nan, "failed")
        if feas.value > FEAS_TOL:
            return SubproblemResult(feas.u, math.inf, "infeasible-recourse", feas.bound, feas.rounds)
    box = _u_box(uset)
    keep, names, A, H, h0 = _reduced(compact, x_vec, box)
    lam_ub = np.full(A.shape[0], float(dual_big_m))
    y_ub = compact.y_upper(x_vec)
    pairs = _balance_pairs(names)

    def build(mb, u_idx):
        w, lam = _kkt_block(mb, A, compact.F, h0, H, y_ub, lam_ub, u_idx, box.lower, box.upper,
                            "kkt", pairs)
        return compact.F, w, lam, lam_ub

    vg = _value_grad(compact, lambda u: compact.redispatch_lp(x_vec, u), backend)
    res = _maximize(build, uset, compact, vg, backend, gap)
    if res.u is not None:
        # audit a vertex dual of the inner LP; the MILP's own multipliers may be degenerate
        rep = solve_lp(compact.redispatch_lp(x_vec, res.u), backend=backend)
        duals = np.abs(rep.duals[keep]) if rep.optimal and rep.duals is not None else np.zeros(0)
        res.dual_alerts = int(audit_big_m(duals, lam_ub).size)
    if res.dual_alerts:
        log.warning("%d dual multipliers within 10%% of the big-M bound %.3g", res.dual_alerts,
                    dual_big_m)
    return res


# --- C&CG -------------------------------------------------------------------

def _json_number(v):
    return v if math.isfinite(v) else (None if math.isnan(v) else ("inf" if v > 0 else "-inf"))


def solve_two_stage_robust(sys: PowerSystem, u_hat, uset, tol: float = 1e-4, max_iter: int = 50,
                           backend=None, incumbent=None, log_sink=None,
                           dual_big_m: float = DUAL_BIG_M) -> RobustSolution:
    """Column-and-constraint generation.

    ``incumbent`` (a first-stage vector) seeds the upper bound. ``log_sink`` is
    called with one JSON line per iteration.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    compact = build_compact_form(sys)
    state = CcgState()
    best_x, best_val, best_u = None, math.nan, None

    def add_scenario(u, link):
        for k, (v, had_link) in enumerate(state.scenarios):
            if np.max(np.abs(v - u)) <= DEDUP_TOL:
                if link and not had_link:
                    # a feasibility-only scenario now also has to bound the recourse cost
                    state.scenarios[k] = (v, True)
                    return True
                return False
        state.scenarios.append((np.asarray(u, float).copy(), link))
        return True

    if incumbent is not None:
        inc = np.asarray(incumbent, float)
        sub = worst_case_subproblem(sys, inc, uset, compact, backend, dual_big_m)
        if sub.status == "optimal":
            state.ub = float(compact.C @ inc) + sub.value
            best_x, best_val, best_u = inc, sub.value, sub.u
            add_scenario(sub.u, True)

    for it in range(1, max_iter + 1):
        state.iterations = it
        x, eta, lb, rep = master_problem(sys, u_hat, state.scenarios, compact, backend)
        if x is None:
            raise RuntimeError(f"master problem {rep.status}: first-stage set is empty for the "
                               "enumerated scenarios")
        state.lb = max(state.lb, lb)
        sub = worst_case_subproblem(sys, x, uset, compact, backend, dual_big_m)
        if sub.status == "failed":
            raise RuntimeError("worst-case subproblem failed")
        if sub.status == "optimal":
            cand = float(compact.C @ x) + sub.value
            if cand < state.ub:
                state.ub, best_x, best_val, best_u = cand, x, sub.value, sub.u
        gap = state.ub - state.lb
        entry = {"iter": it, "LB": _json_number(state.lb), "UB": _json_number(state.ub),
                 "gap": _json_number(gap), "subproblem_status": sub.status,
                 "scenario_count": len(state.scenarios)}
        state.log.append(entry)
        if log_sink is not None:
            log_sink(json.dumps(entry))
        if best_x is not None and gap <= tol * (1 + abs(state.ub)):
            state.converged = True
            break
        if not add_scenario(sub.u, sub.status == "optimal"):
            state.converged = best_x is not None
            break

    if best_x is None:
        return RobustSolution(None, None, math.inf, math.nan, math.inf, None, state)
    xs = CommitmentSchedule.from_vector(sys, best_x)
    return RobustSolution(xs, best_x, state.ub, predispatch_cost(sys, xs), best_val, best_u, state)


# --- two-split procedure ---------------------------------------------------

@dataclass
class Algorithm2Report:
    first: RobustSolution
    final: RobustSolution
    first_set: EllipsoidCapSet
    final_set: CostLevelSet
    alpha: float
    beta: float
    n_star: int
    wall_time: float

    @property
    def x0(self):
        return self.first.x_vector

    @property
    def x1(self):
        return self.final.x_vector

    def to_dict(self):
        return {"alpha": self.alpha, "beta": _json_number(self.beta), "n_star": self.n_star,
                "x0_objective": self.first.objective, "x0_cost": self.first.first_stage_cost,
                "objective": self.final.objective, "converged": self.final.converged,
                "points_outside": self.final_set.points_outside(), "wall_time": self.wall_time}


def run_algorithm2(sys: PowerSystem, u_hat, errors, eps, delta, n_size, box: BoxSet,
                   tol: float = 1e-4, max_iter: int = 50, backend=None, n_recon: int | None = None,
                   log_sink=None) -> Algorithm2Report:
    """Shape split -> max-radius ellipsoid -> ``x0`` -> cost level on the size split -> ``x1``.

    With ``n_recon`` set, the cost level is calibrated on a third split taken
    after the size split instead of reusing the size split.
    """
    t0 = time.perf_counter()
    E = np.atleast_2d(np.asarray(errors, float))
    extra = n_recon or 0
    n_shape = len(E) - n_size - extra
    if n_shape < 2:
        raise ValueError(f"{len(E)} errors leave fewer than two for the shape split")
    shape, size = E[:n_shape], E[n_shape:n_shape + n_size]
    recon = E[n_shape + n_size:] if n_recon else size
    first_set = build_ellipsoid_variant(u_hat, shape, "all", box)
    first = solve_two_stage_robust(sys, u_hat, first_set, tol, max_iter, backend, log_sink=log_sink)
    if first.x_vector is None:
        raise RuntimeError("no robust-feasible schedule for the first uncertainty set")
    compact = build_compact_form(sys)
    final_set = reconstruct_set(first.x_vector, u_hat, recon, eps, delta, box, compact, backend)
    final = solve_two_stage_robust(sys, u_hat, final_set, tol, max_iter, backend,
                                   incumbent=first.x_vector, log_sink=log_sink)
    return Algorithm2Report(first, final, first_set, final_set, first_set.alpha, final_set.beta,
                            final_set.n_star, time.perf_counter() - t0)
