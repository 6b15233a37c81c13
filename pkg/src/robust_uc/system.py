"""Power system data, the pre-dispatch feasible set and the compact two-stage form.

Decision vectors are laid out block-wise with generator-major ordering inside
each block (column ``g * T + t``):

* pre-dispatch ``x = (theta, theta_up, theta_dn, p, r_up, r_dn)``
* re-dispatch ``y = (p_up, p_dn)``
* uncertainty ``u`` = net-load matrix (bus x period) flattened bus-major.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .milp import EQ, GE, LE, LinearProgram, ModelBuilder, solve_lp

X_BLOCKS = ("theta", "theta_up", "theta_dn", "p", "r_up", "r_dn")
Y_BLOCKS = ("p_up", "p_dn")


@dataclass(frozen=True)
class Generator:
    bus: int
    o_plus: float = 0.0
    o_minus: float = 0.0
    rho: float = 0.0
    gamma_plus: float = 0.0
    gamma_minus: float = 0.0
    rho_plus: float = 0.0
    rho_minus: float = 0.0
    p_min: float = 0.0
    p_max: float = 0.0
    r_plus_max: float = 0.0
    r_minus_max: float = 0.0
    k_plus: float = 0.0
    k_minus: float = 0.0
    k_up: float = 0.0
    k_down: float = 0.0
    t_up: int = 1
    t_down: int = 1
    theta0: int = 0

    def check(self, horizon):
        if not 0.0 <= self.p_min <= self.p_max:
            raise ValueError(f"generator at bus {self.bus}: need 0 <= p_min <= p_max")
        costs = (self.o_plus, self.o_minus, self.rho, self.gamma_plus, self.gamma_minus,
                 self.rho_plus, self.rho_minus)
        if min(costs) < 0:
            raise ValueError(f"generator at bus {self.bus}: costs must be nonnegative")
        if min(self.k_plus, self.k_minus, self.k_up, self.k_down,
               self.r_plus_max, self.r_minus_max) < 0:
            raise ValueError(f"generator at bus {self.bus}: ramp/reserve limits must be >= 0")
        if not (1 <= self.t_up <= horizon and 1 <= self.t_down <= horizon):
            raise ValueError(
                f"generator at bus {self.bus}: minimum up/down times must lie in [1, {horizon}]")
        if self.theta0 not in (0, 1):
            raise ValueError("theta0 must be 0 or 1")


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    capacity: float

    def __post_init__(self):
        if not self.capacity > 0:
            raise ValueError("line capacity must be positive")


@dataclass(frozen=True, eq=False)
class PowerSystem:
    horizon: int
    buses: tuple
    generators: tuple
    lines: tuple = ()
    ptdf_gen: np.ndarray = field(default=None)
    ptdf_bus: np.ndarray = field(default=None)

    def __post_init__(self):
        T = self.horizon
        if T < 1:
            raise ValueError("horizon must be at least one period")
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "lines", tuple(self.lines))
        L, G, I = len(self.lines), len(self.generators), len(self.buses)
        pg = np.zeros((L, G)) if self.ptdf_gen is None else np.asarray(self.ptdf_gen, float)
        pb = np.zeros((L, I)) if self.ptdf_bus is None else np.asarray(self.ptdf_bus, float)
        pg = pg.reshape(L, G)
        pb = pb.reshape(L, I)
        object.__setattr__(self, "ptdf_gen", pg)
        object.__setattr__(self, "ptdf_bus", pb)
        if G == 0:
            raise ValueError("system needs at least one generator")
        bus_set = set(self.buses)
        for g in self.generators:
            if g.bus not in bus_set:
                raise ValueError(f"generator references unknown bus {g.bus}")
            g.check(T)
        for ln in self.lines:
            if ln.from_bus not in bus_set or ln.to_bus not in bus_set:
                raise ValueError("line references unknown bus")

    @property
    def T(self):
        return self.horizon

    @property
    def n_gen(self):
        return len(self.generators)

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def n_line(self):
        return len(self.lines)

    @property
    def n_x(self):
        return 6 * self.n_gen * self.T

    @property
    def n_y(self):
        return 2 * self.n_gen * self.T

    @property
    def n_u(self):
        return self.n_bus * self.T

    def gen_param(self, name) -> np.ndarray:
        return np.array([getattr(g, name) for g in self.generators], dtype=float)

    def scaled_costs(self, factor: float) -> "PowerSystem":
        """Copy with every cost coefficient multiplied by ``factor``."""
        cost_fields = ("o_plus", "o_minus", "rho", "gamma_plus", "gamma_minus",
                       "rho_plus", "rho_minus")
        gens = []
        for g in self.generators:
            d = {f.name: getattr(g, f.name) for f in fields(Generator)}
            for k in cost_fields:
                d[k] *= factor
            gens.append(Generator(**d))
        return PowerSystem(self.horizon, self.buses, gens, self.lines, self.ptdf_gen,
                           self.ptdf_bus)

    def x_index(self, offset: int = 0) -> dict:
        """Column indices of each pre-dispatch block as (G, T) arrays."""
        G, T = self.n_gen, self.T
        return {name: offset + k * G * T + np.arange(G * T).reshape(G, T)
                for k, name in enumerate(X_BLOCKS)}

    def check_load(self, u_hat) -> np.ndarray:
        u_hat = np.asarray(u_hat, dtype=float)
        if u_hat.shape == (self.n_u,):
            u_hat = u_hat.reshape(self.n_bus, self.T)
        if u_hat.shape != (self.n_bus, self.T):
            raise ValueError(f"load matrix must have shape {(self.n_bus, self.T)}, got {u_hat.shape}")
        return u_hat

    # --- JSON ---------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "buses": list(self.buses),
            "generators": [{f.name: getattr(g, f.name) for f in fields(Generator)}
                           for g in self.generators],
            "lines": [{"from": ln.from_bus, "to": ln.to_bus, "capacity": ln.capacity}
                      for ln in self.lines],
            "ptdf": {"gen": self.ptdf_gen.tolist(), "bus": self.ptdf_bus.tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PowerSystem":
        try:
            gens = [Generator(**g) for g in d["generators"]]
            lines = [Line(ln["from"], ln["to"], ln["capacity"]) for ln in d.get("lines", [])]
            ptdf = d.get("ptdf", {})
            L = len(lines)
            pg = np.asarray(ptdf.get("gen", np.zeros((L, len(gens)))), float)
            pb = np.asarray(ptdf.get("bus", np.zeros((L, len(d["buses"])))), float)
            if L and (pg.shape != (L, len(gens)) or pb.shape != (L, len(d["buses"]))):
                raise ValueError("ptdf matrices need one row per line")
            return cls(int(d["horizon"]), tuple(d["buses"]), gens, lines, pg, pb)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"invalid power system document: {exc}") from exc


def load_system(path) -> PowerSystem:
    with open(path, encoding="utf-8") as fh:
        return PowerSystem.from_dict(json.load(fh))


def save_system(sys: PowerSystem, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(Path(path), json.dumps(sys.to_dict(), indent=2, sort_keys=True))


@dataclass
class CommitmentSchedule:
    theta: np.ndarray
    theta_up: np.ndarray
    theta_dn: np.ndarray
    p: np.ndarray
    r_up: np.ndarray
    r_dn: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(getattr(self, b), float).ravel() for b in X_BLOCKS])

    @classmethod
    def from_vector(cls, sys: PowerSystem, vec) -> "CommitmentSchedule":
        vec = np.asarray(vec, dtype=float)
        G, T = sys.n_gen, sys.T
        blocks = vec.reshape(6, G, T)
        return cls(*(blocks[k].copy() for k in range(6)))

    @classmethod
    def zeros(cls, sys: PowerSystem) -> "CommitmentSchedule":
        return cls.from_vector(sys, np.zeros(sys.n_x))

    def to_dict(self) -> dict:
        return {b: np.asarray(getattr(self, b)).tolist() for b in X_BLOCKS}

    @classmethod
    def from_dict(cls, d) -> "CommitmentSchedule":
        return cls(*(np.asarray(d[b], float) for b in X_BLOCKS))


@dataclass
class RedispatchPlan:
    p_up: np.ndarray
    p_dn: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.p_up, float).ravel(),
                               np.asarray(self.p_dn, float).ravel()])

    @classmethod
    def from_vector(cls, sys: PowerSystem, vec) -> "RedispatchPlan":
        vec = np.asarray(vec, dtype=float).reshape(2, sys.n_gen, sys.T)
        return cls(vec[0].copy(), vec[1].copy())


# --- pre-dispatch set -----------------------------------------------------

def cost_vector_x(sys: PowerSystem) -> np.ndarray:
    T = sys.T
    per = [np.zeros(sys.n_gen), sys.gen_param("o_plus"), sys.gen_param("o_minus"),
           sys.gen_param("rho"), sys.gen_param("gamma_plus"), sys.gen_param("gamma_minus")]
    return np.concatenate([np.repeat(v, T) for v in per])


def cost_vector_y(sys: PowerSystem) -> np.ndarray:
    T = sys.T
    return np.concatenate([np.repeat(sys.gen_param("rho_plus"), T),
                           np.repeat(sys.gen_param("rho_minus"), T)])


def predispatch_cost(sys: PowerSystem, x: CommitmentSchedule) -> float:
    o_p, o_m = sys.gen_param("o_plus")[:, None], sys.gen_param("o_minus")[:, None]
    rho = sys.gen_param("rho")[:, None]
    g_p, g_m = sys.gen_param("gamma_plus")[:, None], sys.gen_param("gamma_minus")[:, None]
    total = (o_p * x.theta_up + o_m * x.theta_dn + rho * x.p + g_p * x.r_up + g_m * x.r_dn)
    return float(total.sum())


def redispatch_cost(sys: PowerSystem, y: RedispatchPlan) -> float:
    return float((sys.gen_param("rho_plus")[:, None] * y.p_up).sum()
                 + (sys.gen_param("rho_minus")[:, None] * y.p_dn).sum())


def add_predispatch_block(mb: ModelBuilder, sys: PowerSystem, u_hat, with_cost: bool = True) -> dict:
    """Add the pre-dispatch variables and their constraints to ``mb``."""
    u_hat = sys.check_load(u_hat)
    G, T = sys.n_gen, sys.T
    C = cost_vector_x(sys) if with_cost else np.zeros(sys.n_x)
    Rp, Rm = sys.gen_param("r_plus_max"), sys.gen_param("r_minus_max")
    Pmin, Pmax = sys.gen_param("p_min"), sys.gen_param("p_max")

    start = mb.num_vars
    blocks = {}
    for k, name in enumerate(X_BLOCKS):
        binary = k < 3
        if binary:
            ub = 1.0
        elif name == "p":
            ub = np.repeat(Pmax, T)
        elif name == "r_up":
            ub = np.repeat(Rp, T)
        else:
            ub = np.repeat(Rm, T)
        idx = mb.add_vars(G * T, 0.0, ub, binary=binary, cost=C[k * G * T:(k + 1) * G * T],
                          name=name)
        blocks[name] = idx.reshape(G, T)
    assert blocks["theta"][0, 0] == start
    th, tu, td = blocks["theta"], blocks["theta_up"], blocks["theta_dn"]
    p, ru, rd = blocks["p"], blocks["r_up"], blocks["r_dn"]

    load = u_hat.sum(axis=0)
    for t in range(T):
        mb.add_row(p[:, t], 1.0, EQ, load[t], name=f"balance[{t}]")
    for l, line in enumerate(sys.lines):
        for t in range(T):
            inj = float(sys.ptdf_bus[l] @ u_hat[:, t])
            mb.add_row(p[:, t], sys.ptdf_gen[l], LE, line.capacity + inj, name=f"flow_max[{l},{t}]")
            mb.add_row(p[:, t], sys.ptdf_gen[l], GE, -line.capacity + inj, name=f"flow_min[{l},{t}]")

    for g, gen in enumerate(sys.generators):
        Tu, Td = gen.t_up, gen.t_down
        for t in range(T):
            if t <= T - Tu:
                idx = list(th[g, t:t + Tu]) + [tu[g, t]]
                mb.add_row(idx, [1.0] * Tu + [-float(Tu)], GE, 0.0, name=f"min_up[{g},{t}]")
            else:
                k = T - t
                idx = list(th[g, t:]) + [tu[g, t]]
                mb.add_row(idx, [1.0] * k + [-float(k)], GE, 0.0, name=f"min_up_tail[{g},{t}]")
            if t <= T - Td:
                idx = list(th[g, t:t + Td]) + [td[g, t]]
                mb.add_row(idx, [-1.0] * Td + [-float(Td)], GE, -float(Td), name=f"min_down[{g},{t}]")
            else:
                k = T - t
                idx = list(th[g, t:]) + [td[g, t]]
                mb.add_row(idx, [-1.0] * k + [-float(k)], GE, -float(k), name=f"min_down_tail[{g},{t}]")
            if t == 0:
                mb.add_row([th[g, 0], tu[g, 0], td[g, 0]], [1.0, -1.0, 1.0], EQ, float(gen.theta0),
                           name=f"transition[{g},{t}]")
            else:
                mb.add_row([th[g, t], th[g, t - 1], tu[g, t], td[g, t]], [1.0, -1.0, -1.0, 1.0], EQ,
                           0.0, name=f"transition[{g},{t}]")
            mb.add_row([tu[g, t], td[g, t]], [1.0, 1.0], LE, 1.0, name=f"no_flip[{g},{t}]")
            mb.add_row([ru[g, t], th[g, t]], [1.0, -Rp[g]], LE, 0.0, name=f"reserve_up[{g},{t}]")
            mb.add_row([rd[g, t], th[g, t]], [1.0, -Rm[g]], LE, 0.0, name=f"reserve_dn[{g},{t}]")
            mb.add_row([th[g, t], rd[g, t], p[g, t]], [Pmin[g], 1.0, -1.0], LE, 0.0,
                       name=f"output_min[{g},{t}]")
            mb.add_row([p[g, t], th[g, t], ru[g, t]], [1.0, -Pmax[g], 1.0], LE, 0.0,
                       name=f"output_max[{g},{t}]")
            if t >= 1:
                mb.add_row([p[g, t], ru[g, t], p[g, t - 1], rd[g, t - 1], th[g, t - 1], tu[g, t]],
                           [1.0, 1.0, -1.0, 1.0, -gen.k_plus, -gen.k_up], LE, 0.0,
                           name=f"ramp_up[{g},{t}]")
                mb.add_row([p[g, t], rd[g, t], p[g, t - 1], ru[g, t - 1], th[g, t], td[g, t]],
                           [-1.0, 1.0, 1.0, 1.0, -gen.k_minus, -gen.k_down], LE, 0.0,
                           name=f"ramp_dn[{g},{t}]")
    return blocks


def build_predispatch_constraints(sys: PowerSystem, u_hat):
    """Mixed-integer description of the pre-dispatch set for prediction ``u_hat``.

    Returns ``(lp, index)`` where ``lp`` minimises the pre-dispatch cost and
    ``index`` maps each block name to a (G, T) array of columns.
    """
    mb = ModelBuilder()
    blocks = add_predispatch_block(mb, sys, u_hat)
    return mb.build(), blocks


def validate_schedule(sys: PowerSystem, u_hat, x: CommitmentSchedule, tol: float = 1e-6) -> list:
    """Evaluate every pre-dispatch constraint directly; returns ``(name, residual)`` pairs."""
    u_hat = sys.check_load(u_hat)
    G, T = sys.n_gen, sys.T
    out = []

    def bad(name, amount):
        if amount > tol:
            out.append((name, float(amount)))

    for b in ("theta", "theta_up", "theta_dn"):
        arr = np.asarray(getattr(x, b))
        if arr.shape != (G, T):
            raise ValueError(f"{b} must have shape {(G, T)}")
        for g, t in zip(*np.nonzero(np.abs(arr - np.round(arr)) > tol)):
            bad(f"binary_{b}[{g},{t}]", abs(arr[g, t] - round(arr[g, t])))
        for g, t in zip(*np.nonzero((arr < -tol) | (arr > 1 + tol))):
            bad(f"binary_{b}[{g},{t}]", max(-arr[g, t], arr[g, t] - 1))
    th, tu, td, p, ru, rd = (np.asarray(getattr(x, b), float) for b in X_BLOCKS)
    load = u_hat.sum(axis=0)
    for t in range(T):
        bad(f"balance[{t}]", abs(p[:, t].sum() - load[t]))
    for l, line in enumerate(sys.lines):
        for t in range(T):
            flow = sys.ptdf_gen[l] @ p[:, t] - sys.ptdf_bus[l] @ u_hat[:, t]
            bad(f"flow_max[{l},{t}]", flow - line.capacity)
            bad(f"flow_min[{l},{t}]", -line.capacity - flow)
    for g, gen in enumerate(sys.generators):
        Tu, Td = gen.t_up, gen.t_down
        for t in range(T):
            if t <= T - Tu:
                bad(f"min_up[{g},{t}]", Tu * tu[g, t] - th[g, t:t + Tu].sum())
            else:
                bad(f"min_up_tail[{g},{t}]", (T - t) * tu[g, t] - th[g, t:].sum())
            if t <= T - Td:
                bad(f"min_down[{g},{t}]", Td * td[g, t] - (1 - th[g, t:t + Td]).sum())
            else:
                bad(f"min_down_tail[{g},{t}]", -(1 - th[g, t:] - td[g, t]).sum())
            prev = gen.theta0 if t == 0 else th[g, t - 1]
            bad(f"transition[{g},{t}]", abs(th[g, t] - prev - tu[g, t] + td[g, t]))
            bad(f"no_flip[{g},{t}]", tu[g, t] + td[g, t] - 1)
            bad(f"reserve_up[{g},{t}]", max(ru[g, t] - gen.r_plus_max * th[g, t], -ru[g, t]))
            bad(f"reserve_dn[{g},{t}]", max(rd[g, t] - gen.r_minus_max * th[g, t], -rd[g, t]))
            bad(f"output_min[{g},{t}]", gen.p_min * th[g, t] + rd[g, t] - p[g, t])
            bad(f"output_max[{g},{t}]", p[g, t] + ru[g, t] - gen.p_max * th[g, t])
            if t >= 1:
                bad(f"ramp_up[{g},{t}]", (p[g, t] + ru[g, t]) - (p[g, t - 1] - rd[g, t - 1])
                    - gen.k_plus * th[g, t - 1] - gen.k_up * tu[g, t])
                bad(f"ramp_dn[{g},{t}]", -(p[g, t] - rd[g, t]) + (p[g, t - 1] + ru[g, t - 1])
                    - gen.k_minus * th[g, t] - gen.k_down * td[g, t])
    return out


def check_ramp_feasibility(sys: PowerSystem, x: CommitmentSchedule, y: RedispatchPlan,
                           tol: float = 1e-6) -> list:
    """Ramp limits on the re-dispatched trajectory ``p + p_up - p_dn``."""
    q = np.asarray(x.p) + np.asarray(y.p_up) - np.asarray(y.p_dn)
    th, tu, td = np.asarray(x.theta), np.asarray(x.theta_up), np.asarray(x.theta_dn)
    out = []
    for g, gen in enumerate(sys.generators):
        for t in range(1, sys.T):
            up = q[g, t] - q[g, t - 1] - gen.k_plus * th[g, t - 1] - gen.k_up * tu[g, t]
            dn = q[g, t - 1] - q[g, t] - gen.k_minus * th[g, t] - gen.k_down * td[g, t]
            if up > tol:
                out.append((f"redispatch_ramp_up[{g},{t}]", float(up)))
            if dn > tol:
                out.append((f"redispatch_ramp_dn[{g},{t}]", float(dn)))
    return out


# --- compact two-stage form ------------------------------------------------

@dataclass(frozen=True, eq=False)
class CompactTwoStage:
    """Second-stage polytope ``A y >= B x + D u + E``, ``y >= 0``, costs ``C.x`` and ``F.y``."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    D: sp.csr_matrix
    E: np.ndarray
    C: np.ndarray
    F: np.ndarray
    row_names: tuple
    x_index: dict
    y_index: dict
    n_bus: int
    horizon: int

    @property
    def n_rows(self):
        return self.A.shape[0]

    @property
    def n_x(self):
        return self.B.shape[1]

    @property
    def n_y(self):
        return self.A.shape[1]

    @property
    def n_u(self):
        return self.D.shape[1]

    def rhs(self, x_vec, u_vec) -> np.ndarray:
        return self.B @ np.asarray(x_vec, float) + self.D @ np.asarray(u_vec, float) + self.E

    def y_upper(self, x_vec) -> np.ndarray:
        """Reserve caps on ``y`` implied by ``x`` (the rows ``-p_up >= -r_up``)."""
        x_vec = np.asarray(x_vec, float)
        return np.concatenate([x_vec[self.x_index["r_up"].ravel()],
                               x_vec[self.x_index["r_dn"].ravel()]])

    def contains(self, x_vec, u_vec, y_vec, tol=1e-7) -> bool:
        y_vec = np.asarray(y_vec, float)
        return bool(np.all(y_vec >= -tol) and np.all(self.A @ y_vec - self.rhs(x_vec, u_vec) >= -tol))

    def redispatch_lp(self, x_vec, u_vec) -> LinearProgram:
        b = self.rhs(x_vec, u_vec)
        m = self.n_rows
        return LinearProgram(self.F, self.A, np.full(m, GE, dtype="<U1"), b,
                             np.zeros(self.n_y), self.y_upper(x_vec), np.zeros(self.n_y, bool))


def build_compact_form(sys: PowerSystem) -> CompactTwoStage:
    """Assemble ``(A, B, C, D, E, F)`` with equalities split into two inequalities."""
    G, T, I, L = sys.n_gen, sys.T, sys.n_bus, sys.n_line
    xi = sys.x_index()
    ny = 2 * G * T
    yi = {"p_up": np.arange(G * T).reshape(G, T), "p_dn": G * T + np.arange(G * T).reshape(G, T)}
    uidx = np.arange(I * T).reshape(I, T)

    A_r, B_r, D_r, E, names = [], [], [], [], []

    def row(a, b, d, e, name):
        A_r.append(a)
        B_r.append(b)
        D_r.append(d)
        E.append(e)
        names.append(name)

    for t in range(T):
        a = {}
        for g in range(G):
            a[yi["p_up"][g, t]] = 1.0
            a[yi["p_dn"][g, t]] = -1.0
        b = {xi["p"][g, t]: -1.0 for g in range(G)}
        d = {uidx[i, t]: 1.0 for i in range(I)}
        row(a, b, d, 0.0, f"balance_lo[{t}]")
        row({k: -v for k, v in a.items()}, {k: -v for k, v in b.items()},
            {k: -v for k, v in d.items()}, 0.0, f"balance_hi[{t}]")
    for l, line in enumerate(sys.lines):
        for t in range(T):
            a, b, d = {}, {}, {}
            for g in range(G):
                pi = sys.ptdf_gen[l, g]
                if pi != 0.0:
                    a[yi["p_up"][g, t]] = pi
                    a[yi["p_dn"][g, t]] = -pi
                    b[xi["p"][g, t]] = -pi
            for i in range(I):
                if sys.ptdf_bus[l, i] != 0.0:
                    d[uidx[i, t]] = sys.ptdf_bus[l, i]
            # flow <= S  ->  -pi.(p_up - p_dn) >= -S + pi.p - pi_bus.u
            row({k: -v for k, v in a.items()}, {k: -v for k, v in b.items()},
                {k: -v for k, v in d.items()}, -line.capacity, f"flow_max[{l},{t}]")
            # flow >= -S  ->  pi.(p_up - p_dn) >= -S - pi.p + pi_bus.u
            row(a, b, d, -line.capacity, f"flow_min[{l},{t}]")
    for name, rname in (("p_up", "r_up"), ("p_dn", "r_dn")):
        for g in range(G):
            for t in range(T):
                row({yi[name][g, t]: -1.0}, {xi[rname][g, t]: -1.0}, {}, 0.0,
                    f"{name}_cap[{g},{t}]")

    def to_csr(rows, ncols):
        r, c, v = [], [], []
        for k, dct in enumerate(rows):
            for j, val in dct.items():
                r.append(k)
                c.append(int(j))
                v.append(val)
        return sp.csr_matrix((v, (r, c)), shape=(len(rows), ncols))

    return CompactTwoStage(
        to_csr(A_r, ny), to_csr(B_r, sys.n_x), to_csr(D_r, I * T), np.array(E, float),
        cost_vector_x(sys), cost_vector_y(sys), tuple(names), xi, yi, I, T,
    )


def redispatch_value(compact: CompactTwoStage, x_vec, u_vec, backend=None):
    """``min F.y`` over the re-dispatch polytope; ``(inf, None)`` when it is empty."""
    rep = solve_lp(compact.redispatch_lp(x_vec, u_vec), backend=backend)
    if not rep.optimal:
        return float("inf"), None
    return rep.objective, rep.x
