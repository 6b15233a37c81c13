"""Embedded LP / binary-MILP engine.

Two interchangeable backends implement the same contracts:

* ``native``: dense revised simplex plus best-bound branch and bound;
* ``highs``: the HiGHS solver shipped with scipy.

The backend is chosen per call, else from ``RUC_SOLVER`` (default ``highs``).
``RUC_MAX_NODES`` caps branch-and-bound nodes.
"""
from __future__ import annotations

import os

import numpy as np

from .bnb import branch_and_bound
from .highs import solve_lp_highs, solve_milp_highs
from .lpfile import read_lp_text, write_lp_text
from .model import (DEFAULT_GAP, EQ, FEAS_TOL, GE, INFEASIBLE, INT_TOL, ITERATION_LIMIT, LE,
                    OPTIMAL, UNBOUNDED, Cut, LinearProgram, ModelBuilder, SolveReport)
from .simplex import solve_lp_simplex

BACKENDS = ("highs", "native")
BIG_M_INFLATION = 1.1
BIG_M_FLOOR = 1.0


def default_backend() -> str:
    name = os.environ.get("RUC_SOLVER", "highs").lower()
    if name not in BACKENDS:
        raise ValueError(f"RUC_SOLVER must be one of {BACKENDS}, got {name!r}")
    return name


def node_limit_from_env(default: int = 100_000) -> int:
    return int(os.environ.get("RUC_MAX_NODES", default))


def solve_lp(lp: LinearProgram, backend: str | None = None) -> SolveReport:
    """Solve a continuous LP; infeasible/unbounded come back as statuses."""
    if lp.is_mip:
        raise ValueError("solve_lp expects an all-continuous problem; use solve_milp")
    backend = backend or default_backend()
    if backend == "native":
        return solve_lp_simplex(lp)
    return solve_lp_highs(lp)


def solve_milp(lp: LinearProgram, lazy_cuts=None, gap_tol: float = DEFAULT_GAP,
               backend: str | None = None, node_limit: int | None = None) -> SolveReport:
    bins = lp.integrality
    if np.any(lp.lb[bins] < 0) or np.any(lp.ub[bins] > 1):
        raise ValueError("integer variables must be binaries with bounds inside [0, 1]")
    backend = backend or default_backend()
    node_limit = node_limit if node_limit is not None else node_limit_from_env()
    if backend == "native":
        return branch_and_bound(lp, lazy_cuts, gap_tol, node_limit)
    return solve_milp_highs(lp, lazy_cuts, gap_tol, node_limit)


def row_interval(lb, ub, coef):
    """Interval ``[lo, hi]`` of ``coef . x`` over the box ``lb <= x <= ub``."""
    coef = np.asarray(coef, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    nz = coef != 0.0
    c, l, u = coef[nz], lb[nz], ub[nz]
    if not (np.all(np.isfinite(l)) and np.all(np.isfinite(u))):
        raise ValueError("row touches an unbounded variable; supply an explicit big-M")
    lo = np.where(c > 0, c * l, c * u).sum()
    hi = np.where(c > 0, c * u, c * l).sum()
    return float(lo), float(hi)


def big_m_for_row(bounds, row) -> float:
    """Big-M bounding ``|coef . x - rhs|`` over variable ``bounds``.

    ``bounds`` is ``(lb, ub)``; ``row`` is ``(coef, rhs)``. The interval bound
    is inflated by 10% and never drops below 1.
    """
    lb, ub = bounds
    coef, rhs = row
    lo, hi = row_interval(lb, ub, coef)
    reach = max(abs(lo - rhs), abs(hi - rhs))
    return max(BIG_M_INFLATION * reach, BIG_M_FLOOR)


def audit_big_m(slacks, big_ms) -> np.ndarray:
    """Indices of big-M rows whose observed slack exceeds 90% of their M."""
    slacks = np.abs(np.asarray(slacks, dtype=float))
    return np.flatnonzero(slacks > 0.9 * np.asarray(big_ms, dtype=float))


__all__ = [
    "BACKENDS", "Cut", "DEFAULT_GAP", "EQ", "FEAS_TOL", "GE", "INFEASIBLE", "INT_TOL",
    "ITERATION_LIMIT", "LE", "LinearProgram", "ModelBuilder", "OPTIMAL", "SolveReport",
    "UNBOUNDED", "audit_big_m", "big_m_for_row", "default_backend", "read_lp_text",
    "row_interval", "solve_lp", "solve_milp", "write_lp_text",
]
