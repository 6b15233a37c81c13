"""Cost surrogate for forecast-combination weights.

A PCA front end compresses the combined prediction, a ReLU MLP maps
``(components, weights)`` to the evaluated cost of the resulting robust
schedule, and the network is written as mixed-integer linear constraints so
the weight can be chosen by a MILP. A particle swarm baseline searches the same
weight simplex without the surrogate.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .io import atomic_write_text
from .milp import EQ, GE, LE, ModelBuilder, big_m_for_row, row_interval, solve_milp
from .system import PowerSystem, build_compact_form, redispatch_value

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SIMPLEX_TOL = 1e-9
INTERVAL_LIMIT = 1e6


# --- forecasts and weights --------------------------------------------------

@dataclass
class ForecastBundle:
    """Per-method predictions for one day, shape ``(methods, buses, periods)``."""
    predictions: np.ndarray
    truth: np.ndarray | None = None

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, float)
        if self.predictions.ndim != 3:
            raise ValueError("predictions must be (methods, buses, periods)")
        if self.truth is not None:
            self.truth = np.asarray(self.truth, float)
            if self.truth.shape != self.predictions.shape[1:]:
                raise ValueError("truth and predictions disagree on dimensions")

    @property
    def n_methods(self) -> int:
        return self.predictions.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.predictions.reshape(self.n_methods, -1)


def check_weight(w, n_methods: int | None = None) -> np.ndarray:
    w = np.asarray(w, float).ravel()
    if n_methods is not None and len(w) != n_methods:
        raise ValueError(f"weight has {len(w)} entries, expected {n_methods}")
    if np.any(w < -SIMPLEX_TOL) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"weight {w.tolist()} is not on the simplex")
    return w


def combine_forecasts(bundle: ForecastBundle, w) -> np.ndarray:
    """Convex combination of the method predictions, shape ``(buses, periods)``."""
    w = check_weight(w, bundle.n_methods)
    return np.tensordot(w, bundle.predictions, axes=1)


def combine_errors(method_errors, w) -> np.ndarray:
    """Errors of the combined forecast; errors are linear in the weight."""
    E = np.asarray(method_errors, float)
    return np.tensordot(check_weight(w, E.shape[0]), E, axes=1)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum w = 1}`` by the sort rule."""
    v = np.asarray(v, float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def simplex_grid(n_methods: int, step: float) -> np.ndarray:
    """All weights on the simplex whose entries are multiples of ``step``."""
    n = int(round(1.0 / step))
    if not math.isclose(n * step, 1.0, abs_tol=1e-9):
        raise ValueError("step must divide 1")
    out = []

    def rec(prefix, left, slots):
        if slots == 1:
            out.append(prefix + [left])
            return
        for k in range(left + 1):
            rec(prefix + [k], left - k, slots - 1)
    rec([], n, n_methods)
    return np.asarray(out, float) / n


def mse_optimal_weight(method_preds, truth) -> np.ndarray:
    """Simplex weight minimising the squared error of the combination.

    Exact: the optimum is the equality-constrained least-squares solution on
    its support, so every support is tried and the best nonnegative one kept.
    """
    P = np.asarray(method_preds, float).reshape(len(method_preds), -1)
    y = np.asarray(truth, float).ravel()
    M = P.shape[0]
    best, best_err = None, math.inf
    for size in range(1, M + 1):
        for S in combinations(range(M), size):
            A = P[list(S)].T
            Q = A.T @ A
            K = np.block([[2 * Q, np.ones((size, 1))], [np.ones((1, size)), np.zeros((1, 1))]])
            rhs = np.r_[2 * A.T @ y, 1.0]
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0][:size]
            if np.any(sol < -1e-12):
                continue
            w = np.zeros(M)
            w[list(S)] = np.clip(sol, 0.0, None)
            w /= w.sum()
            err = float(np.sum((P.T @ w - y) ** 2))
            if err < best_err - 1e-12:
                best, best_err = w, err
    return best


# --- evaluated cost ---------------------------------------------------------

def infeasible_penalty(sys: PowerSystem, u) -> float:
    """Finite sentinel for an unrepairable scenario: all net load at the dearest rate."""
    rate = max(max(g.rho_plus, g.rho_minus) for g in sys.generators)
    return float(np.abs(np.asarray(u, float)).sum()) * rate


def scenario_costs(sys: PowerSystem, x_vec, u_hat, errors, compact=None, backend=None):
    """Total cost and feasibility flag of ``x`` under each ``u_hat + e``."""
    compact = compact or build_compact_form(sys)
    x_vec = np.asarray(x_vec, float)
    base = float(compact.C @ x_vec)
    u0 = np.asarray(u_hat, float).ravel()
    costs, ok = [], []
    for e in np.atleast_2d(np.asarray(errors, float)):
        u = u0 + e
        val, _ = redispatch_value(compact, x_vec, u, backend)
        feasible = math.isfinite(val)
        costs.append(base + (val if feasible else infeasible_penalty(sys, u)))
        ok.append(feasible)
    return np.asarray(costs), np.asarray(ok, bool)


def evaluate_strategy_cost(sys: PowerSystem, x_vec, u_hat, eval_errors, eps: float,
                           compact=None, backend=None) -> float:
    """The ``ceil((1 - eps) N')``-th smallest total cost over the evaluation errors."""
    costs, _ = scenario_costs(sys, x_vec, u_hat, eval_errors, compact, backend)
    if len(costs) == 0:
        raise ValueError("no evaluation errors")
    k = min(max(math.ceil(round((1.0 - eps) * len(costs), 9)), 1), len(costs))
    return float(np.sort(costs, kind="stable")[k - 1])


# --- PCA ----------------------------------------------------------------------

def jacobi_eigh(S, tol: float = 1e-13, max_sweeps: int = 100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in nonincreasing order and the matching eigenvectors
    as columns.
    """
    A = np.array(S, float)
    n = A.shape[0]
    if not np.allclose(A, A.T, atol=1e-10 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix is not symmetric")
    V = np.eye(n)
    scale = max(np.abs(A).max(), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                # rotate rows and columns p, q
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], V[:, order]


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # rows are orthonormal directions
    explained: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        return (X.reshape(-1, self.mean.size) - self.mean) @ self.components.T

    def inverse(self, D) -> np.ndarray:
        return np.asarray(D, float) @ self.components + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "components": self.components.tolist(),
                "explained": self.explained.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], float), np.asarray(d["components"], float),
                   np.asarray(d["explained"], float))


def fit_pca(samples, n_components: int) -> PcaModel:
    X = np.asarray(samples, float)
    X = X.reshape(len(X), -1)
    n, dim = X.shape
    if n_components < 1 or n_components > min(n - 1, dim):
        raise ValueError(f"n_components={n_components} needs 1 <= n <= min(samples - 1, dim) = "
                         f"{min(n - 1, dim)}")
    mean = X.mean(axis=0)
    Z = X - mean
    vals, vecs = jacobi_eigh(Z.T @ Z / (n - 1))
    comps = vecs[:, :n_components].T.copy()
    # fix the sign so the largest entry of each component is positive
    for k in range(n_components):
        j = np.argmax(np.abs(comps[k]))
        if comps[k, j] < 0:
            comps[k] = -comps[k]
    return PcaModel(mean, comps, np.clip(vals[:n_components], 0.0, None))


# --- MLP ----------------------------------------------------------------------

@dataclass
class MlpModel:
    """ReLU network with an affine input scaling and a linear output head.

    ``weights[i]`` has shape ``(out, in)``; the last entry is the head.
    """
    weights: list
    biases: list
    in_scale: np.ndarray
    in_shift: np.ndarray

    @property
    def n_hidden(self) -> int:
        return len(self.weights) - 1

    def scale(self, X) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, float)) * self.in_scale + self.in_shift

    def preactivations(self, X) -> list:
        """Hidden pre-activations of each layer for raw inputs ``X``."""
        v = self.scale(X)
        out = []
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            s = v @ W.T + b
            out.append(s)
            v = np.maximum(s, 0.0)
        return out

    def forward(self, X) -> np.ndarray:
        v = self.scale(X)
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            v = np.maximum(v @ W.T + b, 0.0)
        return (v @ self.weights[-1].T + self.biases[-1])[:, 0]

    def to_dict(self):
        return {"weights": [W.tolist() for W in self.weights],
                "biases": [b.tolist() for b in self.biases],
                "in_scale": self.in_scale.tolist(), "in_shift": self.in_shift.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls([np.asarray(W, float) for W in d["weights"]],
                   [np.asarray(b, float) for b in d["biases"]],
                   np.asarray(d["in_scale"], float), np.asarray(d["in_shift"], float))


def init_params(sizes, rng):
    """He-initialised weights and zero biases for layer ``sizes`` (input first)."""
    Ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        Ws.append(rng.normal(0.0, math.sqrt(2.0 / a), size=(b, a)))
        bs.append(np.zeros(b))
    return Ws, bs


def loss_and_grad(Ws, bs, V0, y, l2: float):
    """Mean squared error plus ``l2 * sum ||W||^2`` and its gradient.

    ``V0`` are already-scaled inputs. Returns ``(loss, dWs, dbs)``.
    """
    acts = [V0]
    pre = []
    v = V0
    for W, b in zip(Ws[:-1], bs[:-1]):
        s = v @ W.T + b
        pre.append(s)
        v = np.maximum(s, 0.0)
        acts.append(v)
    out = (v @ Ws[-1].T + bs[-1])[:, 0]
    n = len(y)
    r = out - y
    loss = float(r @ r / n + l2 * sum(np.sum(W * W) for W in Ws))
    dWs = [None] * len(Ws)
    dbs = [None] * len(bs)
    g = (2.0 / n) * r[:, None]
    dWs[-1] = g.T @ acts[-1] + 2 * l2 * Ws[-1]
    dbs[-1] = g.sum(axis=0)
    g = g @ Ws[-1]
    for i in range(len(Ws) - 2, -1, -1):
        g = g * (pre[i] > 0)
        dWs[i] = g.T @ acts[i] + 2 * l2 * Ws[i]
        dbs[i] = g.sum(axis=0)
        g = g @ Ws[i]
    return loss, dWs, dbs


@dataclass
class TrainResult:
    model: MlpModel
    train_loss: float
    val_loss: float
    epochs: int
    history: list = field(default_factory=list)


def train_mlp(X, y, hidden=(16, 16), lr: float = 1e-3, epochs: int = 1000, l2: float = 1e-4,
              patience: int = 50, val_frac: float = 0.2, batch_size: int = 32,
              seed: int = 0) -> TrainResult:
    """Adam on min-max scaled inputs and standardised targets.

    The target standardisation is folded into the output head afterwards, so the
    returned model predicts costs directly. Training stops early after
    ``patience`` epochs without validation improvement (when a validation split
    exists) and keeps the best parameters.
    """
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float).ravel()
    if len(X) == 0 or len(X) != len(y):
        raise ValueError("training table is empty or misaligned")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise FloatingPointError("training table holds non-finite values")
    rng = np.random.default_rng(seed)
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi - lo > 1e-12, hi - lo, 1.0)
    in_scale, in_shift = 1.0 / span, -lo / span
    V = X * in_scale + in_shift
    mu, sd = float(y.mean()), float(y.std())
    sd = sd if sd > 1e-12 else 1.0
    t = (y - mu) / sd

    idx = rng.permutation(len(X))
    n_val = int(round(val_frac * len(X))) if len(X) >= 5 else 0
    val, tr = idx[:n_val], idx[n_val:]
    Ws, bs = init_params([X.shape[1], *hidden, 1], rng)
    params = Ws + bs
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, eps_adam = 0.9, 0.999, 1e-8
    step = 0
    best = (math.inf, [p.copy() for p in params])
    since = 0
    history = []
    tr_loss = math.nan
    epoch = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(tr)
        for k in range(0, len(order), batch_size):
            bi = order[k:k + batch_size]
            tr_loss, dWs, dbs = loss_and_grad(Ws, bs, V[bi], t[bi], l2)
            if not math.isfinite(tr_loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}, batch {k}")
            step += 1
            for p, g, mi, vi in zip(params, dWs + dbs, m, v):
                mi *= b1
                mi += (1 - b1) * g
                vi *= b2
                vi += (1 - b2) * g * g
                p -= lr * (mi / (1 - b1 ** step)) / (np.sqrt(vi / (1 - b2 ** step)) + eps_adam)
        tr_loss = loss_and_grad(Ws, bs, V[tr], t[tr], l2)[0]
        vl = loss_and_grad(Ws, bs, V[val], t[val], l2)[0] if len(val) else tr_loss
        history.append((tr_loss, vl))
        if vl < best[0] - 1e-12:
            best = (vl, [p.copy() for p in params])
            since = 0
        else:
            since += 1
            if len(val) and since >= patience:
                break
    final = best[1]
    nW = len(Ws)
    Ws, bs = final[:nW], final[nW:]
    # fold the target standardisation into the head
    Ws[-1] = Ws[-1] * sd
    bs[-1] = bs[-1] * sd + mu
    model = MlpModel(Ws, bs, in_scale, in_shift)
    return TrainResult(model, history[-1][0] if history else math.nan, best[0], epoch, history)


# --- surrogate -----------------------------------------------------------------

@dataclass
class SurrogateModel:
    """PCA of the combined prediction plus weights, fed to an MLP that predicts cost."""
    pca: PcaModel
    mlp: MlpModel
    n_methods: int
    feature_lower: np.ndarray
    feature_upper: np.ndarray

    def features(self, bundle: ForecastBundle, w) -> np.ndarray:
        w = check_weight(w, self.n_methods)
        d = self.pca.transform(combine_forecasts(bundle, w).ravel())[0]
        return np.r_[d, w[:-1]]

    def predict(self, bundle: ForecastBundle, w) -> float:
        return float(self.mlp.forward(self.features(bundle, w))[0])

    def to_dict(self):
        return {"format_version": FORMAT_VERSION, "n_methods": self.n_methods,
                "pca": self.pca.to_dict(), "mlp": self.mlp.to_dict(),
                "feature_lower": self.feature_lower.tolist(),
                "feature_upper": self.feature_upper.tolist()}

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported surrogate format {d.get('format_version')!r}")
        return cls(PcaModel.from_dict(d["pca"]), MlpModel.from_dict(d["mlp"]), int(d["n_methods"]),
                   np.asarray(d["feature_lower"], float), np.asarray(d["feature_upper"], float))

    def save(self, path):
        atomic_write_text(path, json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrainingTable:
    days: list
    features: np.ndarray  # PCA components of the combined prediction
    weights: np.ndarray
    cost: np.ndarray
    first_stage: np.ndarray  # f(x) of each recorded schedule

    def inputs(self) -> np.ndarray:
        return np.hstack([self.features, self.weights[:, :-1]])

    def to_csv(self, path):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        nd, nm = self.features.shape[1], self.weights.shape[1]
        w.writerow(["day"] + [f"d{k + 1}" for k in range(nd)] + [f"w{k + 1}" for k in range(nm)]
                   + ["first_stage", "cost"])
        for day, d, wt, f, c in zip(self.days, self.features, self.weights, self.first_stage,
                                    self.cost):
            w.writerow([day] + [repr(float(v)) for v in d] + [repr(float(v)) for v in wt]
                       + [repr(float(f)), repr(float(c))])
        atomic_write_text(path, buf.getvalue())

    @classmethod
    def from_csv(cls, path):
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty file")
        head = rows[0]
        nd = sum(1 for h in head if h.startswith("d") and h[1:].isdigit())
        nm = sum(1 for h in head if h.startswith("w") and h[1:].isdigit())
        body = rows[1:]
        for k, r in enumerate(body, start=2):
            if len(r) != len(head):
                raise ValueError(f"{path}: row {k} has {len(r)} fields, expected {len(head)}")
        vals = np.asarray([[float(v) for v in r[1:]] for r in body], float).reshape(len(body), -1)
        return cls([r[0] for r in body], vals[:, :nd], vals[:, nd:nd + nm], vals[:, -1],
                   vals[:, -2])


@dataclass
class TrainingDay:
    """One uncertainty sample: the day's predictions and the method errors it may use."""
    day: str
    bundle: ForecastBundle
    calibration_errors: np.ndarray  # (methods, N, dim), chronological
    eval_errors: np.ndarray  # (methods, N', dim)


def generate_training_set(sys: PowerSystem, days, weights, pca: PcaModel, eps: float,
                          delta: float, n_size: int, box, backend=None, n_recon=None,
                          tol: float = 1e-4, log_sink=None) -> TrainingTable:
    """Rows ``(components, weight, evaluated cost)`` for every day and weight.

    Each row runs the two-split robust procedure on the combined prediction and
    the combined historical errors, then scores the schedule on the day's
    evaluation errors.
    """
    from .robust import run_algorithm2

    compact = build_compact_form(sys)
    names, feats, ws, costs, firsts = [], [], [], [], []
    for td in days:
        for w in np.atleast_2d(np.asarray(weights, float)):
            w = check_weight(w, td.bundle.n_methods)
            u_hat = combine_forecasts(td.bundle, w)
            E = combine_errors(td.calibration_errors, w)
            try:
                rep = run_algorithm2(sys, u_hat, E, eps, delta, n_size, box, tol=tol,
                                     backend=backend, n_recon=n_recon)
            except RuntimeError as exc:
                rep = None
                reason = str(exc)
            if rep is None or rep.x1 is None:
                # the cost of a weight without a robust schedule is undefined; leave it out
                if log_sink is not None:
                    log_sink(json.dumps({"day": td.day, "weight": w.tolist(), "skipped":
                                         reason if rep is None else "no robust schedule"}))
                continue
            ev = combine_errors(td.eval_errors, w)
            cost = evaluate_strategy_cost(sys, rep.x1, u_hat, ev, eps, compact, backend)
            names.append(td.day)
            feats.append(pca.transform(u_hat.ravel())[0])
            ws.append(w)
            costs.append(cost)
            firsts.append(float(compact.C @ rep.x1))
            if log_sink is not None:
                log_sink(json.dumps({"day": td.day, "weight": w.tolist(), "cost": cost,
                                     "wall_time": rep.wall_time}))
    if not costs:
        raise RuntimeError("no weight sample produced a robust schedule")
    return TrainingTable(names, np.asarray(feats), np.asarray(ws), np.asarray(costs),
                         np.asarray(firsts))


def build_surrogate(table: TrainingTable, pca: PcaModel, **train_kw) -> tuple:
    """Train the MLP on a table; returns ``(SurrogateModel, TrainResult)``."""
    X = table.inputs()
    res = train_mlp(X, table.cost, **train_kw)
    model = SurrogateModel(pca, res.model, table.weights.shape[1], X.min(axis=0), X.max(axis=0))
    return model, res


# --- MILP encoding ------------------------------------------------------------

@dataclass
class SurrogateMilp:
    lp: object
    w: np.ndarray
    u_hat: np.ndarray
    inputs: np.ndarray
    pre: list
    post: list
    z: list
    out: int
    bounds: list  # per hidden layer (lower, upper) of the pre-activations


def _input_bounds(model: SurrogateModel, bundle: ForecastBundle):
    """Raw feature bounds over the weight simplex for this bundle."""
    D = model.pca.transform(bundle.flat)  # components of each pure method
    lo = np.r_[D.min(axis=0), np.zeros(model.n_methods - 1)]
    hi = np.r_[D.max(axis=0), np.ones(model.n_methods - 1)]
    return lo, hi


def encode_surrogate_milp(model: SurrogateModel, bundle: ForecastBundle) -> SurrogateMilp:
    """Mixed-integer linear model of ``cost(w)`` for one day's predictions.

    Pre-activation bounds come from interval propagation and size each unit's
    big-M; units with a fixed sign need no binary.
    """
    if bundle.n_methods != model.n_methods:
        raise ValueError("bundle and surrogate disagree on the number of methods")
    mlp, pca = model.mlp, model.pca
    mb = ModelBuilder()
    M = model.n_methods
    dim = bundle.flat.shape[1]
    w = mb.add_vars(M, 0.0, 1.0, name="w")
    mb.add_row(w, np.ones(M), EQ, 1.0, name="simplex")
    lo_u = bundle.flat.min(axis=0)
    hi_u = bundle.flat.max(axis=0)
    u = mb.add_vars(dim, lo_u, hi_u, name="u_hat")
    for j in range(dim):
        mb.add_row(np.r_[u[j], w], np.r_[1.0, -bundle.flat[:, j]], EQ, 0.0, name="combine")
    f_lo, f_hi = _input_bounds(model, bundle)
    v_lo = f_lo * mlp.in_scale + mlp.in_shift
    v_hi = f_hi * mlp.in_scale + mlp.in_shift
    n_in = len(f_lo)
    v0 = mb.add_vars(n_in, np.minimum(v_lo, v_hi), np.maximum(v_lo, v_hi), name="v0")
    n_pc = pca.n_components
    for k in range(n_pc):
        # v0 = scale * P_k (u - mean) + shift
        coef = mlp.in_scale[k] * pca.components[k]
        rhs = mlp.in_shift[k] - float(coef @ pca.mean)
        mb.add_row(np.r_[v0[k], u], np.r_[1.0, -coef], EQ, rhs, name="pca")
    for m in range(M - 1):
        mb.add_row([v0[n_pc + m], w[m]], [1.0, -mlp.in_scale[n_pc + m]], EQ, mlp.in_shift[n_pc + m],
                   name="weight_in")

    prev, p_lo, p_hi = v0, np.minimum(v_lo, v_hi), np.maximum(v_lo, v_hi)
    pres, posts, zs, bounds = [], [], [], []
    for i, (W, b) in enumerate(zip(mlp.weights[:-1], mlp.biases[:-1])):
        n_out = W.shape[0]
        lo = np.empty(n_out)
        hi = np.empty(n_out)
        for j in range(n_out):
            a, c = row_interval(p_lo, p_hi, W[j])
            lo[j], hi[j] = a + b[j], c + b[j]
        if np.max(np.abs(np.r_[lo, hi])) > INTERVAL_LIMIT:
            raise ValueError(f"layer {i + 1} pre-activation bounds exceed {INTERVAL_LIMIT:g}; "
                             "tighten the input bounds")
        s = mb.add_vars(n_out, lo, hi, name=f"s{i + 1}")
        v = mb.add_vars(n_out, 0.0, np.maximum(hi, 0.0), name=f"v{i + 1}")
        z = np.full(n_out, -1)
        for j in range(n_out):
            mb.add_row(np.r_[s[j], prev], np.r_[1.0, -W[j]], EQ, b[j], name="affine")
            if hi[j] <= 0:
                mb.add_row([v[j]], [1.0], EQ, 0.0)
                continue
            if lo[j] >= 0:
                mb.add_row([v[j], s[j]], [1.0, -1.0], EQ, 0.0)
                continue
            big = big_m_for_row((p_lo, p_hi), (W[j], -b[j]))
            z[j] = mb.add_var(0.0, 1.0, binary=True, name=f"z{i + 1}")
            mb.add_row([v[j], z[j]], [1.0, -big], LE, 0.0)
            mb.add_row([v[j], s[j]], [1.0, -1.0], GE, 0.0)
            mb.add_row([v[j], s[j], z[j]], [1.0, -1.0, big], LE, big)
        pres.append(s)
        posts.append(v)
        zs.append(z)
        bounds.append((lo, hi))
        prev, p_lo, p_hi = v, np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    out = mb.add_var(-np.inf, np.inf, cost=1.0, name="cost")
    Wh, bh = mlp.weights[-1][0], mlp.biases[-1][0]
    mb.add_row(np.r_[out, prev], np.r_[1.0, -Wh], EQ, bh, name="head")
    return SurrogateMilp(mb.build(), w, u, v0, pres, posts, zs, out, bounds)


def solve_surrogate_at(model: SurrogateModel, bundle: ForecastBundle, w, backend=None) -> float:
    """Surrogate output read from the MILP with the weight fixed."""
    enc = encode_surrogate_milp(model, bundle)
    w = check_weight(w, model.n_methods)
    lb, ub = enc.lp.lb.copy(), enc.lp.ub.copy()
    lb[enc.w] = ub[enc.w] = w
    rep = solve_milp(enc.lp.with_bounds(lb, ub), gap_tol=1e-9, backend=backend)
    if not rep.optimal:
        raise RuntimeError(f"fixed-weight surrogate MILP {rep.status}")
    return float(rep.x[enc.out])


def optimize_weights(model: SurrogateModel, bundle: ForecastBundle, backend=None):
    """Weight minimising the surrogate cost; returns ``(w, predicted cost)``."""
    enc = encode_surrogate_milp(model, bundle)
    rep = solve_milp(enc.lp, gap_tol=1e-9, backend=backend)
    if not rep.optimal:
        raise RuntimeError(f"weight MILP {rep.status}")
    w = project_simplex(rep.x[enc.w])
    return w, float(rep.x[enc.out])


# --- particle swarm --------------------------------------------------------------

@dataclass
class PsoResult:
    w: np.ndarray
    value: float
    evaluations: int
    history: list


def optimize_weights_pso(evaluate, n_methods: int, particles: int = 10, inertia: float = 0.5,
                         cognitive: float = 1.0, social: float = 1.5, max_evals: int = 200,
                         time_budget: float | None = None, seed: int = 0) -> PsoResult:
    """Particle swarm over the weight simplex; positions are projected after every move."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    X = rng.dirichlet(np.ones(n_methods), size=particles)
    Vel = np.zeros_like(X)
    evals = 0
    history = []

    def score(x):
        nonlocal evals
        evals += 1
        val = float(evaluate(x))
        history.append((x.tolist(), val))
        return val

    P = X.copy()
    Pval = np.array([score(x) for x in X])
    g = int(np.argmin(Pval))
    G, Gval = P[g].copy(), Pval[g]

    def out_of_budget():
        if evals >= max_evals:
            return True
        return time_budget is not None and time.perf_counter() - t0 >= time_budget

    while not out_of_budget():
        for k in range(particles):
            if out_of_budget():
                break
            r1, r2 = rng.random(n_methods), rng.random(n_methods)
            Vel[k] = inertia * Vel[k] + cognitive * r1 * (P[k] - X[k]) + social * r2 * (G - X[k])
            X[k] = project_simplex(X[k] + Vel[k])
            val = score(X[k])
            if val < Pval[k]:
                P[k], Pval[k] = X[k].copy(), val
                if val < Gval:
                    G, Gval = X[k].copy(), val
    return PsoResult(G, Gval, evals, history)
