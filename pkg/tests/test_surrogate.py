import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_bundle, small_case, trained_surrogate
from robust_uc.system import cost_vector_x
from robust_uc.surrogate import (FORMAT_VERSION, ForecastBundle, SurrogateModel, TrainingTable,
                                 check_weight, combine_errors, combine_forecasts,
                                 evaluate_strategy_cost, fit_pca, infeasible_penalty, init_params,
                                 jacobi_eigh, loss_and_grad, mse_optimal_weight, optimize_weights,
                                 optimize_weights_pso, project_simplex, simplex_grid,
                                 solve_surrogate_at, train_mlp)


def test_jacobi_matches_numpy():
    A = np.random.default_rng(0).normal(size=(6, 6))
    S = A @ A.T
    vals, vecs = jacobi_eigh(S)
    assert np.allclose(vals, np.sort(np.linalg.eigvalsh(S))[::-1], atol=1e-9)
    assert np.allclose(S @ vecs, vecs * vals, atol=1e-8)
    assert np.allclose(vecs.T @ vecs, np.eye(6), atol=1e-10)


def test_jacobi_rejects_asymmetric():
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_pca_refit_on_projected_data_is_identity():
    X = np.random.default_rng(1).normal(size=(40, 5)) * [5, 3, 2, 1, 0.5]
    pca = fit_pca(X, 2)
    Y = pca.inverse(pca.transform(X))
    again = fit_pca(Y, 2)
    assert np.allclose(np.abs(again.components @ pca.components.T), np.eye(2), atol=1e-8)
    assert np.allclose(again.transform(Y), pca.transform(X), atol=1e-8)


def test_pca_too_many_components():
    with pytest.raises(ValueError):
        fit_pca(np.zeros((3, 5)), 3)


def test_simplex_grid_size_and_membership():
    G = simplex_grid(3, 0.05)
    assert len(G) == math.comb(20 + 2, 2)
    assert np.allclose(G.sum(axis=1), 1.0) and np.all(G >= 0)
    with pytest.raises(ValueError):
        simplex_grid(3, 0.3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=5))
def test_projection_lands_on_simplex_and_is_idempotent(v):
    p = project_simplex(np.asarray(v))
    assert np.all(p >= 0) and math.isclose(p.sum(), 1.0, abs_tol=1e-9)
    assert np.allclose(project_simplex(p), p, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_projection_is_closest_grid_competitor(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=3)
    p = project_simplex(v)
    G = simplex_grid(3, 0.1)
    assert np.sum((v - p) ** 2) <= np.min(np.sum((G - v) ** 2, axis=1)) + 1e-12


def test_combination_is_linear_in_weight():
    rng = np.random.default_rng(2)
    b = random_bundle(rng)
    w1, w2 = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))
    mid = 0.5 * (w1 + w2)
    assert np.allclose(combine_forecasts(b, mid),
                       0.5 * (combine_forecasts(b, w1) + combine_forecasts(b, w2)))
    E = rng.normal(size=(3, 10, 9))
    assert np.allclose(combine_errors(E, [1, 0, 0]), E[0])


def test_weight_off_simplex_rejected():
    with pytest.raises(ValueError):
        check_weight([0.5, 0.6, -0.1])


def test_mse_weight_beats_every_grid_point():
    rng = np.random.default_rng(3)
    truth = rng.normal(size=(50, 4))
    preds = truth + rng.normal(size=(3, 50, 4)) * np.array([1.0, 2.0, 1.5])[:, None, None] \
        + np.array([0.5, -0.5, 0.0])[:, None, None]
    w = mse_optimal_weight(preds, truth)

    def err(v):
        return np.sum((np.tensordot(v, preds, axes=1) - truth) ** 2)
    assert np.all(err(w) <= np.array([err(g) for g in simplex_grid(3, 0.05)]) + 1e-9)


def test_single_method_mse_weight():
    preds = np.ones((1, 5, 2))
    assert mse_optimal_weight(preds, np.zeros((5, 2))).tolist() == [1.0]


def _numeric_gradient(Ws, bs, V, y, l2, which, i, j, h=1e-5):
    params = Ws if which == "W" else bs
    orig = params[i].flat[j]
    params[i].flat[j] = orig + h
    up = loss_and_grad(Ws, bs, V, y, l2)[0]
    params[i].flat[j] = orig - h
    dn = loss_and_grad(Ws, bs, V, y, l2)[0]
    params[i].flat[j] = orig
    return (up - dn) / (2 * h)


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_central_differences(seed):
    rng = np.random.default_rng(seed)
    Ws, bs = init_params([5, 16, 16, 1], rng)
    bs = [b + rng.normal(0, 0.1, size=b.shape) for b in bs]
    V, y = rng.uniform(size=(30, 5)), rng.normal(size=30)
    _, dWs, dbs = loss_and_grad(Ws, bs, V, y, 1e-3)
    for _ in range(20):
        which = "W" if rng.random() < 0.7 else "b"
        i = int(rng.integers(len(Ws)))
        j = int(rng.integers((Ws if which == "W" else bs)[i].size))
        analytic = (dWs if which == "W" else dbs)[i].flat[j]
        numeric = _numeric_gradient(Ws, bs, V, y, 1e-3, which, i, j)
        assert abs(analytic - numeric) <= 1e-4 * max(abs(numeric), 1e-3)


def test_training_fits_a_smooth_function():
    rng = np.random.default_rng(4)
    X = rng.uniform(-1, 1, size=(200, 2))
    y = 100 + 30 * X[:, 0] ** 2 - 10 * X[:, 1]
    res = train_mlp(X, y, hidden=(16, 16), lr=3e-3, epochs=400, seed=0)
    pred = res.model.forward(X)
    assert np.sqrt(np.mean((pred - y) ** 2)) < 0.1 * y.std()


def test_training_reports_non_finite_loss():
    X = np.random.default_rng(5).uniform(size=(10, 2))
    y = np.r_[np.full(9, 1.0), np.inf]
    with pytest.raises(FloatingPointError):
        train_mlp(X, y, epochs=5)


def test_surrogate_milp_matches_forward_pass():
    model, bundles = trained_surrogate(0)
    rng = np.random.default_rng(6)
    for b in bundles[:2]:
        for w in rng.dirichlet(np.ones(3), size=5):
            assert solve_surrogate_at(model, b, w) == pytest.approx(model.predict(b, w), abs=1e-5)


def test_weight_milp_beats_grid_and_mse_weight():
    model, bundles = trained_surrogate(1)
    b = bundles[0]
    w, predicted = optimize_weights(model, b)
    assert predicted == pytest.approx(model.predict(b, w), abs=1e-5)
    grid = min(model.predict(b, g) for g in simplex_grid(3, 0.05))
    assert predicted <= grid + 1e-5
    w_mse = mse_optimal_weight(b.predictions, b.truth)
    assert predicted <= model.predict(b, w_mse) + 1e-5


def test_surrogate_rejects_mismatched_bundle():
    model, _ = trained_surrogate(2, epochs=5)
    b = random_bundle(np.random.default_rng(0), n_methods=2)
    with pytest.raises(ValueError):
        optimize_weights(model, b)


def test_pso_finds_quadratic_minimum():
    target = np.array([0.2, 0.5, 0.3])
    res = optimize_weights_pso(lambda w: float(np.sum((w - target) ** 2)), 3, max_evals=300,
                               seed=0)
    assert np.allclose(res.w, target, atol=0.03)
    assert res.evaluations <= 300
    assert np.all(res.w >= 0) and math.isclose(res.w.sum(), 1.0)


def test_pso_is_deterministic_given_seed():
    f = lambda w: float(w[0] - w[1] ** 2)  # noqa: E731
    a = optimize_weights_pso(f, 3, max_evals=50, seed=3)
    b = optimize_weights_pso(f, 3, max_evals=50, seed=3)
    assert np.array_equal(a.w, b.w)


def test_surrogate_save_load_round_trip(tmp_path):
    model, bundles = trained_surrogate(3, epochs=20)
    path = tmp_path / "sur.json"
    model.save(path)
    back = SurrogateModel.load(path)
    w = np.array([0.3, 0.3, 0.4])
    assert back.predict(bundles[0], w) == model.predict(bundles[0], w)
    d = model.to_dict()
    d["format_version"] = FORMAT_VERSION + 1
    with pytest.raises(ValueError, match="format"):
        SurrogateModel.from_dict(d)


def test_training_table_csv_round_trip(tmp_path):
    t = TrainingTable(["a", "b"], np.array([[1.0, 2.0], [3.0, 4.5]]),
                      np.array([[0.5, 0.5], [1.0, 0.0]]), np.array([10.0, 11.25]),
                      np.array([5.0, 6.0]))
    t.to_csv(tmp_path / "t.csv")
    back = TrainingTable.from_csv(tmp_path / "t.csv")
    assert back.days == t.days
    for f in ("features", "weights", "cost", "first_stage"):
        assert np.array_equal(getattr(back, f), getattr(t, f))


def test_evaluated_cost_takes_the_quantile():
    _, sys, u_hat = small_case()
    from robust_uc.robust import master_problem

    x, *_ = master_problem(sys, u_hat.ravel(), [u_hat.ravel()])
    rng = np.random.default_rng(7)
    E = rng.normal(scale=0.5, size=(20, u_hat.size))
    from robust_uc.surrogate import scenario_costs

    costs, ok = scenario_costs(sys, x, u_hat, E)
    assert evaluate_strategy_cost(sys, x, u_hat, E, 0.1) == pytest.approx(np.sort(costs)[17])
    assert evaluate_strategy_cost(sys, x, u_hat, E, 0.05) == pytest.approx(np.sort(costs)[18])


def test_infeasible_scenarios_cost_the_penalty():
    _, sys, u_hat = small_case()
    from robust_uc.robust import master_problem
    from robust_uc.surrogate import scenario_costs

    x, *_ = master_problem(sys, u_hat.ravel(), [u_hat.ravel()])
    E = np.full((1, u_hat.size), 400.0)
    costs, ok = scenario_costs(sys, x, u_hat, E)
    u = u_hat.ravel() + E[0]
    assert not ok[0]
    rate = max(max(g.rho_plus, g.rho_minus) for g in sys.generators)
    assert infeasible_penalty(sys, u) == pytest.approx(np.abs(u).sum() * rate)
    base = float(cost_vector_x(sys) @ x)
    assert costs[0] == pytest.approx(base + infeasible_penalty(sys, u))


def test_bundle_shape_checks():
    with pytest.raises(ValueError):
        ForecastBundle(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        ForecastBundle(np.zeros((2, 3, 4)), np.zeros((3, 3)))
