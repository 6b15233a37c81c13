"""Small case builders and samplers shared across test modules."""
from __future__ import annotations

import numpy as np

from robust_uc.milp import ModelBuilder, solve_lp, solve_milp
from robust_uc.synthetic import SyntheticSpec, build_system
from robust_uc.system import (CommitmentSchedule, Generator, PowerSystem,
                              add_predispatch_block, build_compact_form)


def one_bus_system(n_gen=2, T=2, **overrides):
    gens = []
    for g in range(n_gen):
        d = dict(bus=0, o_plus=10.0 * (g + 1), o_minus=1.0, rho=10.0 + 5 * g, gamma_plus=1.0,
                 gamma_minus=0.5, rho_plus=20.0 + 5 * g, rho_minus=4.0, p_min=5.0, p_max=60.0,
                 r_plus_max=20.0, r_minus_max=20.0, k_plus=40.0, k_minus=40.0, k_up=60.0,
                 k_down=60.0, t_up=1, t_down=1, theta0=0)
        d.update(overrides)
        gens.append(Generator(**d))
    return PowerSystem(T, (0,), gens)


def small_case():
    spec = SyntheticSpec()
    sys = build_system(spec)
    u_hat = np.outer(spec.base_load, spec.profile)
    return spec, sys, u_hat


def sample_schedule(sys, u_hat, rng):
    """A random member of the pre-dispatch set from a randomly priced MILP."""
    mb = ModelBuilder()
    idx = add_predispatch_block(mb, sys, u_hat, with_cost=False)
    lp = mb.build()
    lp.c[:] = rng.normal(size=lp.num_vars)
    rep = solve_milp(lp)
    assert rep.optimal
    return CommitmentSchedule.from_vector(sys, rep.x[: sys.n_x])


def sample_redispatch(sys, x, u_hat, rng):
    """Random ``u`` that admits re-dispatch together with a random LP vertex ``y``."""
    compact = build_compact_form(sys)
    xv = x.to_vector()
    for _ in range(50):
        y0 = rng.uniform(0, 1, size=(2, sys.n_gen, sys.T)) * np.stack([x.r_up, x.r_dn])
        net = (x.p + y0[0] - y0[1]).sum(axis=0)
        u = np.array(u_hat, float).copy()
        u[0] += net - u.sum(axis=0)
        lp = compact.redispatch_lp(xv, u.ravel())
        lp.c[:] = rng.normal(size=lp.num_vars)
        rep = solve_lp(lp)
        if rep.optimal:
            return u, rep.x
    raise AssertionError("could not sample a feasible re-dispatch")


def random_bundle(rng, n_methods=3, n_bus=3, T=3):
    from robust_uc.surrogate import ForecastBundle

    base = rng.uniform(20, 80, size=(n_bus, T))
    preds = base + rng.normal(0, 6, size=(n_methods, n_bus, T))
    return ForecastBundle(preds, base)


def trained_surrogate(seed, n_methods=3, epochs=300):
    """Small surrogate trained on a smooth valley-shaped cost over random weights."""
    from robust_uc.surrogate import (SurrogateModel, TrainingTable, build_surrogate,
                                     combine_forecasts, fit_pca)

    rng = np.random.default_rng(seed)
    bundles = [random_bundle(rng, n_methods) for _ in range(4)]
    pca = fit_pca(np.vstack([b.flat for b in bundles]), 3)
    target = rng.dirichlet(np.ones(n_methods))
    W = rng.dirichlet(np.ones(n_methods), size=40)
    feats, ws, cost, days = [], [], [], []
    for k, b in enumerate(bundles):
        for w in W:
            d = pca.transform(combine_forecasts(b, w).ravel())[0]
            feats.append(d)
            ws.append(w)
            cost.append(1000 + 800 * np.sum((w - target) ** 2) + 2.0 * d[0])
            days.append(f"d{k}")
    table = TrainingTable(days, np.asarray(feats), np.asarray(ws), np.asarray(cost),
                          np.zeros(len(cost)))
    model, _ = build_surrogate(table, pca, hidden=(8, 8), epochs=epochs, lr=3e-3, seed=seed)
    return model, bundles
