"""Synthetic test cases with a known forecast-error distribution.

Net load at bus ``i`` on day ``d`` is ``U = base * profile + z + noise`` where
``z ~ N(0, Sigma)`` is shared by every forecaster. Method ``m`` predicts
``U - (z + bias_m + scale_m * xi_m)`` with ``xi_m ~ N(0, R)``, so the error of a
weighted combination is Gaussian with a closed-form mean and covariance.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .io import atomic_write_text, write_wide_csv
from .system import Generator, Line, PowerSystem

DEFAULT_GENERATORS = (
    dict(o_plus=200.0, o_minus=20.0, rho=20.0, gamma_plus=2.0, gamma_minus=1.0, rho_plus=24.0,
         rho_minus=6.0, p_min=30.0, p_max=160.0, r_plus_max=70.0, r_minus_max=60.0, k_plus=130.0,
         k_minus=130.0, k_up=150.0, k_down=150.0, t_up=2, t_down=2, theta0=1),
    dict(o_plus=120.0, o_minus=10.0, rho=32.0, gamma_plus=3.0, gamma_minus=1.5, rho_plus=40.0,
         rho_minus=8.0, p_min=10.0, p_max=110.0, r_plus_max=60.0, r_minus_max=50.0, k_plus=120.0,
         k_minus=120.0, k_up=110.0, k_down=110.0, t_up=2, t_down=1, theta0=0),
    dict(o_plus=40.0, o_minus=5.0, rho=55.0, gamma_plus=1.0, gamma_minus=0.5, rho_plus=70.0,
         rho_minus=12.0, p_min=0.0, p_max=60.0, r_plus_max=40.0, r_minus_max=30.0, k_plus=60.0,
         k_minus=60.0, k_up=60.0, k_down=60.0, t_up=1, t_down=1, theta0=0),
)


@dataclass
class SyntheticSpec:
    n_days: int = 400
    horizon: int = 3
    base_load: tuple = (20.0, 60.0, 70.0)
    profile: tuple = (0.85, 1.0, 1.15)
    gen_buses: tuple = (0, 1)
    generators: tuple = DEFAULT_GENERATORS[:2]
    line_capacity: float = 90.0
    error_sigma: tuple = (2.5, 5.0, 6.0)
    spatial_corr: float = 0.4
    temporal_corr: float = 0.6
    method_bias: tuple = (-3.0, 0.0, 2.0)
    method_noise: tuple = (1.5, 5.0, 2.5)
    box_margin: float = 0.6
    splits: dict = field(default_factory=lambda: {"shape": 160, "size": 80, "recon": 60,
                                                  "eval": 40, "test": 60})


def triangle_ptdf(n_bus: int, lines, slack: int = 0) -> np.ndarray:
    """Bus PTDF (lines x buses) of a DC network with unit reactances."""
    L = len(lines)
    inc = np.zeros((L, n_bus))
    for l, (a, b) in enumerate(lines):
        inc[l, a], inc[l, b] = 1.0, -1.0
    Bbus = inc.T @ inc
    keep = [i for i in range(n_bus) if i != slack]
    X = np.zeros((n_bus, n_bus))
    X[np.ix_(keep, keep)] = np.linalg.inv(Bbus[np.ix_(keep, keep)])
    return inc @ X


def build_system(spec: SyntheticSpec) -> PowerSystem:
    n_bus = len(spec.base_load)
    pairs = [(i, (i + 1) % n_bus) for i in range(n_bus)] if n_bus > 2 else (
        [(0, 1)] if n_bus == 2 else [])
    ptdf_bus = triangle_ptdf(n_bus, pairs) if pairs else np.zeros((0, n_bus))
    gens = [Generator(bus=b, **tmpl) for b, tmpl in zip(spec.gen_buses, spec.generators)]
    lines = [Line(a, b, spec.line_capacity) for a, b in pairs]
    ptdf_gen = ptdf_bus[:, [g.bus for g in gens]] if pairs else np.zeros((0, len(gens)))
    return PowerSystem(spec.horizon, tuple(range(n_bus)), gens, lines, ptdf_gen, ptdf_bus)


def error_covariance(spec: SyntheticSpec) -> np.ndarray:
    """Covariance of the common error component, bus-major layout."""
    n_bus, T = len(spec.base_load), spec.horizon
    sig = np.asarray(spec.error_sigma, float)
    Cs = np.full((n_bus, n_bus), spec.spatial_corr)
    np.fill_diagonal(Cs, 1.0)
    Ct = spec.temporal_corr ** np.abs(np.subtract.outer(np.arange(T), np.arange(T)))
    return np.kron(np.outer(sig, sig) * Cs, Ct)


def noise_correlation(spec: SyntheticSpec) -> np.ndarray:
    n_bus, T = len(spec.base_load), spec.horizon
    Ct = spec.temporal_corr ** np.abs(np.subtract.outer(np.arange(T), np.arange(T)))
    return np.kron(np.eye(n_bus), Ct)


def combined_error_law(spec: SyntheticSpec, w):
    """Mean and covariance of ``U - sum_m w_m Uhat_m`` for a weight vector ``w``."""
    w = np.asarray(w, float)
    dim = len(spec.base_load) * spec.horizon
    mean = np.full(dim, float(np.dot(w, spec.method_bias)))
    cov = error_covariance(spec) + float(np.sum((w * np.asarray(spec.method_noise)) ** 2)) * \
        noise_correlation(spec)
    return mean, cov


def box_bounds(spec: SyntheticSpec):
    base = np.outer(spec.base_load, spec.profile)
    return base * (1 - spec.box_margin), base * (1 + spec.box_margin)


def generate_synthetic_case(spec: SyntheticSpec, seed: int, out_dir) -> dict:
    """Write system, truth and per-method forecast files plus ``case.json``."""
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    n_bus, T = len(spec.base_load), spec.horizon
    dim = n_bus * T
    D = spec.n_days
    base = np.outer(spec.base_load, spec.profile).ravel()
    level = 1.0 + 0.05 * np.sin(2 * np.pi * np.arange(D) / 7.0)
    Lz = np.linalg.cholesky(error_covariance(spec))
    Lr = np.linalg.cholesky(noise_correlation(spec))
    z = rng.standard_normal((D, dim)) @ Lz.T
    truth = level[:, None] * base[None, :] + z
    lo, hi = box_bounds(spec)
    truth = np.clip(truth, lo.ravel(), hi.ravel())
    forecasts = []
    for bias, scale in zip(spec.method_bias, spec.method_noise):
        xi = rng.standard_normal((D, dim)) @ Lr.T
        forecasts.append(truth - (z + bias + scale * xi))

    sys = build_system(spec)
    days = [f"d{k:04d}" for k in range(D)]
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "system.json", json.dumps(sys.to_dict(), indent=2, sort_keys=True))
    write_wide_csv(out / "truth.csv", days, truth, n_bus, T)
    names = []
    for m, f in enumerate(forecasts):
        name = f"forecast_m{m + 1}.csv"
        write_wide_csv(out / name, days, f, n_bus, T)
        names.append(name)
    meta = {
        "system": "system.json",
        "truth": "truth.csv",
        "forecasts": names,
        "box": {"lower": lo.tolist(), "upper": hi.tolist()},
        "splits": dict(spec.splits),
        "seed": seed,
        "ground_truth": {
            "common_covariance": error_covariance(spec).tolist(),
            "noise_correlation": noise_correlation(spec).tolist(),
            "method_bias": list(spec.method_bias),
            "method_noise": list(spec.method_noise),
        },
        "spec": {k: v for k, v in asdict(spec).items() if k != "generators"},
    }
    atomic_write_text(out / "case.json", json.dumps(meta, indent=2, sort_keys=True))
    return meta
