"""Case loading, method variants, out-of-sample evaluation and sweeps.

Days are split chronologically into shape, size, optional reconstruction,
evaluation and test blocks. A run schedules one target day from the test block
using the history before it and is scored on the test block's errors and the
day's actual net load.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .io import atomic_write_text, read_wide_csv
from .robust import run_algorithm2, solve_two_stage_robust
from .surrogate import (ForecastBundle, SurrogateModel, TrainingDay, build_surrogate,
                        combine_errors, combine_forecasts, evaluate_strategy_cost, fit_pca,
                        generate_training_set, mse_optimal_weight, optimize_weights,
                        optimize_weights_pso, scenario_costs, simplex_grid)
from .system import PowerSystem, build_compact_form, load_system, predispatch_cost
from .uncertainty import BoxSet, build_ellipsoid_set, build_ellipsoid_variant

log = logging.getLogger(__name__)

VARIANTS = ("RO1", "RO2", "P1", "P2", "PROPOSED", "PSO")
SPLIT_ORDER = ("shape", "size", "recon", "eval", "test")
# which variants calibrate statistically, weight by decision cost and reconstruct the set
VARIANT_TRAITS = {
    "RO1": (False, False, False),
    "RO2": (False, False, False),
    "P1": (True, True, False),
    "P2": (True, False, True),
    "PROPOSED": (True, True, True),
    "PSO": (True, True, True),
}


@dataclass
class CaseConfig:
    case: str  # path to case.json
    eps: float = 0.05
    delta: float = 0.05
    splits: dict | None = None  # overrides the case file's split sizes
    strict: bool = False  # calibrate the cost level on the separate recon split
    variant: str = "PROPOSED"
    tol: float = 1e-4
    max_iter: int = 50
    seed: int = 0
    target: int = 0  # offset of the scheduled day inside the test block
    pca_components: int = 3
    hidden: tuple = (16, 16)
    epochs: int = 1000
    lr: float = 1e-3
    l2: float = 1e-4
    train_days: int = 2
    weight_step: float = 0.1
    dirichlet_weights: int = 50
    pso_evals: int = 20
    backend: str | None = None

    def __post_init__(self):
        if not (0 < self.eps < 1 and 0 < self.delta < 1):
            raise ValueError("eps and delta must lie in (0, 1)")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.seed is None:
            raise ValueError("seed is mandatory")
        self.hidden = tuple(int(h) for h in self.hidden)

    def to_dict(self):
        return asdict(self)


@dataclass
class Case:
    system: PowerSystem
    days: list
    predictions: np.ndarray  # (methods, days, dim)
    truth: np.ndarray  # (days, dim)
    box: BoxSet
    blocks: dict  # split name -> index array
    meta: dict = field(default_factory=dict)

    @property
    def n_methods(self) -> int:
        return self.predictions.shape[0]

    def method_errors(self, idx) -> np.ndarray:
        idx = np.asarray(idx, int)
        return self.truth[idx][None, :, :] - self.predictions[:, idx, :]

    def bundle(self, day: int) -> ForecastBundle:
        I, T = self.system.n_bus, self.system.T
        return ForecastBundle(self.predictions[:, day].reshape(self.n_methods, I, T),
                              self.truth[day].reshape(I, T))

    def calibration_index(self, strict: bool) -> np.ndarray:
        parts = ["shape", "size"] + (["recon"] if strict else [])
        return np.concatenate([self.blocks[p] for p in parts])


def load_case(config: CaseConfig) -> Case:
    """Read the case files and cut the chronological blocks."""
    path = Path(config.case)
    with open(path, encoding="utf-8") as fh:
        meta = json.load(fh)
    root = path.parent
    for key in ("system", "truth", "forecasts", "box"):
        if key not in meta:
            raise ValueError(f"{path}: missing field {key!r}")
    sys = load_system(root / meta["system"])
    dim = sys.n_bus * sys.T
    days, truth = read_wide_csv(root / meta["truth"], dim)
    preds = []
    for name in meta["forecasts"]:
        d, P = read_wide_csv(root / name, dim)
        if d != days:
            raise ValueError(f"{name}: days do not match {meta['truth']}")
        preds.append(P)
    box = BoxSet(np.asarray(meta["box"]["lower"], float), np.asarray(meta["box"]["upper"], float))
    if box.dim != dim:
        raise ValueError(f"{path}: box has {box.dim} entries, expected {dim}")
    sizes = dict(meta.get("splits", {}))
    sizes.update(config.splits or {})
    for k in SPLIT_ORDER:
        sizes.setdefault(k, 0)
        if sizes[k] < 0:
            raise ValueError(f"split {k} has negative size")
    need = sum(sizes[k] for k in SPLIT_ORDER)
    if need > len(days):
        raise ValueError(f"splits {sizes} need {need} days but the case has {len(days)}")
    if sizes["test"] < 1 or sizes["shape"] < 2 or sizes["size"] < 1:
        raise ValueError("splits need at least 2 shape, 1 size and 1 test day")
    blocks, start = {}, 0
    for k in SPLIT_ORDER:
        blocks[k] = np.arange(start, start + sizes[k])
        start += sizes[k]
    return Case(sys, days, np.stack(preds), truth, box, blocks, meta)


@dataclass
class RunReport:
    variant: str
    day: str
    weight: list
    objective: float
    first_stage_cost: float
    feasible_rate: float
    test_total_cost: float
    wall_time: float
    converged: bool
    alpha: float | None = None
    beta: float | None = None
    points_outside: int | None = None
    ccg_log: list = field(default_factory=list)
    schedule: dict | None = None

    def to_dict(self):
        d = asdict(self)
        for k in ("objective", "beta", "test_total_cost"):
            v = d[k]
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = "inf" if v > 0 else None
        return d


def evaluate_out_of_sample(sys: PowerSystem, x_vec, u_hat, test_errors, truth, backend=None):
    """``(feasible rate over the test errors, total cost under the actual load)``."""
    E = np.atleast_2d(np.asarray(test_errors, float))
    if E.size == 0:
        raise ValueError("empty test set")
    compact = build_compact_form(sys)
    _, ok = scenario_costs(sys, x_vec, u_hat, E, compact, backend)
    actual = np.asarray(truth, float).ravel() - np.asarray(u_hat, float).ravel()
    cost, _ = scenario_costs(sys, x_vec, u_hat, actual[None, :], compact, backend)
    return float(ok.mean()), float(cost[0])


def fit_case_pca(case: Case, config: CaseConfig):
    """PCA of the method predictions over the calibration history."""
    idx = case.calibration_index(config.strict)
    X = case.predictions[:, idx].reshape(-1, case.predictions.shape[2])
    return fit_pca(X, config.pca_components)


def training_days(case: Case, config: CaseConfig) -> list:
    """The last ``train_days`` days before the test block, as training samples."""
    pool = np.concatenate([case.blocks["recon"], case.blocks["eval"]])
    if config.strict:
        pool = case.blocks["eval"]
    if len(pool) < config.train_days:
        raise ValueError("not enough days before the test block for surrogate training")
    calib = case.method_errors(case.calibration_index(config.strict))
    ev = case.method_errors(case.blocks["eval"])
    return [TrainingDay(case.days[d], case.bundle(d), calib, ev)
            for d in pool[len(pool) - config.train_days:]]


def training_weights(case: Case, config: CaseConfig) -> np.ndarray:
    W = simplex_grid(case.n_methods, config.weight_step)
    if config.dirichlet_weights:
        rng = np.random.default_rng(config.seed)
        W = np.vstack([W, rng.dirichlet(np.ones(case.n_methods), size=config.dirichlet_weights)])
    return W


def train_case_surrogate(case: Case, config: CaseConfig, log_sink=None):
    """Generate the training table and fit the surrogate; returns ``(model, table, fit)``."""
    pca = fit_case_pca(case, config)
    n_size = len(case.blocks["size"])
    n_recon = len(case.blocks["recon"]) if config.strict else None
    table = generate_training_set(case.system, training_days(case, config),
                                  training_weights(case, config), pca, config.eps, config.delta,
                                  n_size, case.box, config.backend, n_recon, config.tol, log_sink)
    model, fit = build_surrogate(table, pca, hidden=config.hidden, lr=config.lr,
                                 epochs=config.epochs, l2=config.l2, seed=config.seed)
    return model, table, fit


def _target(case: Case, config: CaseConfig) -> int:
    test = case.blocks["test"]
    if not 0 <= config.target < len(test):
        raise ValueError(f"target offset {config.target} outside the test block")
    return int(test[config.target])


def choose_weight(case: Case, config: CaseConfig, surrogate: SurrogateModel | None = None,
                  log_sink=None) -> np.ndarray:
    """Forecast-combination weight used by ``config.variant``."""
    calib = case.calibration_index(config.strict)
    decision_focused = VARIANT_TRAITS[config.variant][1]
    if not decision_focused:
        return mse_optimal_weight(case.predictions[:, calib], case.truth[calib])
    bundle = case.bundle(_target(case, config))
    if config.variant == "PSO":
        return pso_weight(case, config, bundle, log_sink)
    if surrogate is None:
        raise ValueError(f"variant {config.variant} needs a trained surrogate")
    w, _ = optimize_weights(surrogate, bundle, config.backend)
    return w


def pso_weight(case: Case, config: CaseConfig, bundle: ForecastBundle, log_sink=None):
    """Particle swarm on the evaluated cost of the robust schedule itself."""
    calib = case.method_errors(case.calibration_index(config.strict))
    ev = case.method_errors(case.blocks["eval"])
    n_size = len(case.blocks["size"])
    n_recon = len(case.blocks["recon"]) if config.strict else None
    compact = build_compact_form(case.system)

    def cost(w):
        u_hat = combine_forecasts(bundle, w)
        rep = run_algorithm2(case.system, u_hat, combine_errors(calib, w), config.eps,
                             config.delta, n_size, case.box, config.tol, config.max_iter,
                             config.backend, n_recon)
        val = evaluate_strategy_cost(case.system, rep.x1, u_hat, combine_errors(ev, w),
                                     config.eps, compact, config.backend)
        if log_sink is not None:
            log_sink(json.dumps({"pso_weight": list(map(float, w)), "cost": val}))
        return val

    res = optimize_weights_pso(cost, case.n_methods, max_evals=config.pso_evals, seed=config.seed)
    return res.w


def run_method(case: Case, config: CaseConfig, surrogate: SurrogateModel | None = None,
               weight=None, log_sink=None) -> RunReport:
    """Schedule the target day with ``config.variant`` and score it out of sample."""
    t0 = time.perf_counter()
    day = _target(case, config)
    bundle = case.bundle(day)
    w = np.asarray(weight, float) if weight is not None else choose_weight(case, config, surrogate,
                                                                            log_sink)
    u_hat = combine_forecasts(bundle, w)
    calib = combine_errors(case.method_errors(case.calibration_index(config.strict)), w)
    n_size = len(case.blocks["size"])
    alpha = beta = outside = None
    v = config.variant
    if v in ("RO1", "RO2", "P1"):
        if v == "P1":
            n_shape = len(calib) - n_size
            uset = build_ellipsoid_set(u_hat, calib[:n_shape], calib[n_shape:], config.eps,
                                       config.delta, case.box)
        else:
            uset = build_ellipsoid_variant(u_hat, calib, "all" if v == "RO1" else "fraction",
                                           case.box, config.eps)
        sol = solve_two_stage_robust(case.system, u_hat, uset, config.tol, config.max_iter,
                                     config.backend, log_sink=log_sink)
        alpha, outside = uset.alpha, uset.points_outside()
    else:
        n_recon = len(case.blocks["recon"]) if config.strict else None
        rep = run_algorithm2(case.system, u_hat, calib, config.eps, config.delta, n_size, case.box,
                             config.tol, config.max_iter, config.backend, n_recon, log_sink)
        sol = rep.final
        alpha, beta, outside = rep.alpha, rep.beta, rep.final_set.points_outside()
    if sol.x_vector is None:
        return RunReport(v, case.days[day], w.tolist(), math.inf, math.nan, 0.0, math.inf,
                         time.perf_counter() - t0, False, alpha, beta, outside, sol.state.log)
    test = combine_errors(case.method_errors(case.blocks["test"]), w)
    rate, cost = evaluate_out_of_sample(case.system, sol.x_vector, u_hat, test,
                                        case.truth[day], config.backend)
    return RunReport(v, case.days[day], w.tolist(), sol.objective,
                     predispatch_cost(case.system, sol.x), rate, cost, time.perf_counter() - t0,
                     sol.converged, alpha, beta, outside, sol.state.log, sol.x.to_dict())


# --- sweeps --------------------------------------------------------------------

SWEEP_COLUMNS = ("parameter", "value", "objective", "feasible_rate", "test_cost",
                 "points_outside", "error")


def sweep(case: Case, config: CaseConfig, parameter: str, values, surrogate=None) -> list:
    """Re-run ``config.variant`` for each value; failures are recorded per row."""
    rows = []
    for val in values:
        try:
            if parameter == "eps":
                rep = run_method(case, replace(config, eps=float(val)), surrogate)
            elif parameter == "delta":
                rep = run_method(case, replace(config, delta=float(val)), surrogate)
            elif parameter == "n_size":
                sizes = {k: len(case.blocks[k]) for k in SPLIT_ORDER}
                shift = int(val) - sizes["size"]
                sizes["size"] = int(val)
                sizes["shape"] -= shift
                sub = load_case(replace(config, splits=sizes))
                rep = run_method(sub, config, surrogate)
            elif parameter == "weight":
                rep = run_method(case, config, surrogate, weight=val)
            else:
                raise ValueError(f"unknown sweep parameter {parameter!r}")
            rows.append({"parameter": parameter, "value": _fmt_value(val),
                         "objective": rep.objective, "feasible_rate": rep.feasible_rate,
                         "test_cost": rep.test_total_cost, "points_outside": rep.points_outside,
                         "error": ""})
        except Exception as exc:  # a failed row must not stop the sweep
            log.warning("sweep %s=%s failed: %s", parameter, val, exc)
            rows.append({"parameter": parameter, "value": _fmt_value(val), "objective": math.nan,
                         "feasible_rate": math.nan, "test_cost": math.nan, "points_outside": "",
                         "error": str(exc)})
    return rows


def _fmt_value(v):
    if np.ndim(v):
        return ";".join(repr(float(x)) for x in np.ravel(v))
    return repr(float(v))


def write_table(path, rows, columns=SWEEP_COLUMNS):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    atomic_write_text(path, buf.getvalue())


def read_table(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def sample_case_path() -> Path:
    """The shipped 3-bus, 2-generator sample case (seed 0 of the synthetic generator)."""
    return Path(__file__).parent / "data" / "sample_case" / "case.json"
