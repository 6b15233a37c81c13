"""Problem containers shared by the LP/MILP backends."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-7
INT_TOL = 1e-6
DEFAULT_GAP = 1e-6

LE, EQ, GE = "<", "=", ">"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


@dataclass
class LinearProgram:
    """A (mixed-integer) linear program ``opt c.x  s.t.  A x {<,=,>} rhs, lb <= x <= ub``.

    Integer variables are restricted to binaries; ``integrality`` marks them.
    """

    c: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray
    sense: str = "min"
    obj_const: float = 0.0
    var_names: Optional[list] = None
    row_names: Optional[list] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A = sp.csr_matrix(self.A, shape=(len(self.rhs), n), dtype=float)
        self.senses = np.asarray(self.senses, dtype="<U1")
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        self.integrality = np.asarray(self.integrality, dtype=bool)
        if self.sense not in ("min", "max"):
            raise ValueError(f"unknown objective sense {self.sense!r}")
        for name, arr in (("lb", self.lb), ("ub", self.ub), ("integrality", self.integrality)):
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
        m = self.A.shape[0]
        if self.senses.shape != (m,):
            raise ValueError("senses and rhs must have one entry per row")
        if not set(np.unique(self.senses)) <= {LE, EQ, GE}:
            raise ValueError("row senses must be '<', '=' or '>'")
        if np.any(self.lb > self.ub):
            raise ValueError("variable lower bound exceeds upper bound")
        ints = self.integrality
        if np.any(~np.isfinite(self.lb[ints])) or np.any(~np.isfinite(self.ub[ints])):
            raise ValueError("integer variables need finite bounds")

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def is_mip(self) -> bool:
        return bool(self.integrality.any())

    def with_rows(self, A_new, senses, rhs) -> "LinearProgram":
        """Return a copy with extra rows appended."""
        names = None
        if self.row_names is not None:
            names = list(self.row_names) + [f"cut{k}" for k in range(len(rhs))]
        return LinearProgram(
            self.c, sp.vstack([self.A, sp.csr_matrix(A_new)]).tocsr(),
            np.concatenate([self.senses, np.asarray(senses, dtype="<U1")]),
            np.concatenate([self.rhs, np.asarray(rhs, dtype=float)]),
            self.lb.copy(), self.ub.copy(), self.integrality.copy(), self.sense,
            self.obj_const, self.var_names, names,
        )

    def with_bounds(self, lb, ub) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.senses, self.rhs, lb, ub,
                             self.integrality, self.sense, self.obj_const,
                             self.var_names, self.row_names)

    def relaxation(self) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.senses, self.rhs, self.lb, self.ub,
                             np.zeros_like(self.integrality), self.sense, self.obj_const,
                             self.var_names, self.row_names)

    def row_activity(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float)

    def max_violation(self, x) -> float:
        """Largest bound or row violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        act = self.row_activity(x)
        viol = [0.0]
        le, ge, eq = self.senses == LE, self.senses == GE, self.senses == EQ
        if le.any():
            viol.append(np.max(act[le] - self.rhs[le]))
        if ge.any():
            viol.append(np.max(self.rhs[ge] - act[ge]))
        if eq.any():
            viol.append(np.max(np.abs(act[eq] - self.rhs[eq])))
        viol.append(np.max(self.lb - x, initial=0.0))
        viol.append(np.max(x - self.ub, initial=0.0))
        return float(max(viol))

    def objective_value(self, x) -> float:
        return float(self.c @ np.asarray(x, dtype=float) + self.obj_const)


@dataclass
class Cut:
    """A single linear row produced by a lazy-constraint callback."""

    coef: np.ndarray
    sense: str
    rhs: float

    def violation(self, x) -> float:
        act = float(np.dot(self.coef, x))
        if self.sense == LE:
            return max(0.0, act - self.rhs)
        if self.sense == GE:
            return max(0.0, self.rhs - act)
        return abs(act - self.rhs)


LazyCallback = Callable[[np.ndarray], Optional[Sequence[Cut]]]


@dataclass
class SolveReport:
    status: str
    objective: float = float("nan")
    x: Optional[np.ndarray] = None
    duals: Optional[np.ndarray] = None
    gap: float = float("nan")
    bound: float = float("nan")
    nodes: int = 0
    iterations: int = 0
    cuts: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    backend: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class ModelBuilder:
    """Incremental construction of a :class:`LinearProgram` by named blocks.

    Variables are added in blocks (``add_vars``) that return their column
    indices; rows are added from ``(indices, coefficients)`` pairs.
    """

    def __init__(self, sense="min"):
        self.sense = sense
        self._lb, self._ub, self._int, self._c, self._names = [], [], [], [], []
        self._rows, self._cols, self._vals = [], [], []
        self._senses, self._rhs, self._row_names = [], [], []
        self.obj_const = 0.0

    @property
    def num_vars(self):
        return len(self._lb)

    @property
    def num_rows(self):
        return len(self._rhs)

    def add_vars(self, n, lb=0.0, ub=np.inf, binary=False, cost=0.0, name="x"):
        start = len(self._lb)
        self._lb.extend(np.broadcast_to(np.asarray(lb, float), (n,)).tolist())
        self._ub.extend(np.broadcast_to(np.asarray(ub, float), (n,)).tolist())
        self._c.extend(np.broadcast_to(np.asarray(cost, float), (n,)).tolist())
        self._int.extend([bool(binary)] * n)
        self._names.extend(f"{name}[{k}]" for k in range(n))
        return np.arange(start, start + n)

    def add_var(self, lb=0.0, ub=np.inf, binary=False, cost=0.0, name="x"):
        return int(self.add_vars(1, lb, ub, binary, cost, name)[0])

    def set_cost(self, idx, cost):
        for i, v in zip(np.atleast_1d(idx), np.broadcast_to(cost, np.shape(np.atleast_1d(idx)))):
            self._c[int(i)] = float(v)

    def add_row(self, idx, coef, sense, rhs, name=None):
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape)
        r = len(self._rhs)
        keep = coef != 0.0
        self._rows.extend([r] * int(keep.sum()))
        self._cols.extend(idx[keep].tolist())
        self._vals.extend(coef[keep].tolist())
        self._senses.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name or f"r{r}")
        return r

    def add_rows(self, M, var_idx, sense, rhs, name="r"):
        """Add ``M @ x[var_idx] {sense} rhs`` for a (sparse or dense) matrix block."""
        M = sp.coo_matrix(M)
        var_idx = np.asarray(var_idx, dtype=int)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (M.shape[0],))
        start = len(self._rhs)
        keep = M.data != 0.0
        self._rows.extend((M.row[keep] + start).tolist())
        self._cols.extend(var_idx[M.col[keep]].tolist())
        self._vals.extend(M.data[keep].tolist())
        self._senses.extend([sense] * M.shape[0])
        self._rhs.extend(rhs.tolist())
        self._row_names.extend(f"{name}[{k}]" for k in range(M.shape[0]))
        return np.arange(start, start + M.shape[0])

    def add_block_rows(self, blocks, sense, rhs, name="r"):
        """Add rows ``sum_k M_k @ x[idx_k] {sense} rhs`` for ``blocks = [(M_k, idx_k), ...]``."""
        m = blocks[0][0].shape[0]
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (m,))
        start = len(self._rhs)
        for M, idx in blocks:
            M = sp.coo_matrix(M)
            if M.shape[0] != m:
                raise ValueError("row blocks must have equal height")
            idx = np.asarray(idx, dtype=int)
            keep = M.data != 0.0
            self._rows.extend((M.row[keep] + start).tolist())
            self._cols.extend(idx[M.col[keep]].tolist())
            self._vals.extend(M.data[keep].tolist())
        self._senses.extend([sense] * m)
        self._rhs.extend(rhs.tolist())
        self._row_names.extend(f"{name}[{k}]" for k in range(m))
        return np.arange(start, start + m)

    def build(self) -> LinearProgram:
        n, m = len(self._lb), len(self._rhs)
        A = sp.coo_matrix((self._vals, (self._rows, self._cols)), shape=(m, n)).tocsr()
        A.sum_duplicates()
        return LinearProgram(
            np.array(self._c), A, np.array(self._senses, dtype="<U1"), np.array(self._rhs),
            np.array(self._lb), np.array(self._ub), np.array(self._int, dtype=bool),
            self.sense, self.obj_const, list(self._names), list(self._row_names),
        )
