import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import small_case
from oracles import binomial_order_oracle
from robust_uc.system import CommitmentSchedule, build_compact_form
from robust_uc.uncertainty import (BoxSet, ErrorDataset, EllipsoidCapSet, build_ellipsoid_set,
                                   build_ellipsoid_variant, coverage, minimal_calibration_size,
                                   quantile_order_index, reconstruct_set, sample_moments)


def wide_box(dim, half=1e6):
    return BoxSet(np.full(dim, -half), np.full(dim, half))


def test_minimal_calibration_size_values():
    assert minimal_calibration_size(0.05, 0.05) == 59
    assert minimal_calibration_size(0.5, 0.5) == 1
    # direct scan for 0.9**N <= 0.05
    assert minimal_calibration_size(0.1, 0.05) == next(n for n in range(1, 100) if 0.9**n <= 0.05)


def test_minimal_calibration_size_rejects_bad_levels():
    with pytest.raises(ValueError):
        minimal_calibration_size(0.0, 0.1)


@pytest.mark.parametrize("N", [59, 124, 200])
def test_quantile_order_index_matches_binomial_oracle(N):
    assert quantile_order_index(N, 0.05, 0.05) == binomial_order_oracle(N, 0.05, 0.05)


def test_quantile_order_index_at_minimal_size_is_the_maximum():
    assert quantile_order_index(59, 0.05, 0.05) == 59
    assert 1 - 0.95**59 >= 0.95


def test_quantile_order_index_excludes_a_point_or_two_at_124():
    assert quantile_order_index(124, 0.05, 0.05) in (122, 123)


def test_quantile_order_index_tiny_eps_keeps_everything():
    n_min = minimal_calibration_size(1e-3, 0.05)
    for N in (n_min, n_min + 500):
        assert quantile_order_index(N, 1e-3, 0.05) == N


def test_quantile_order_index_too_few_samples():
    with pytest.raises(ValueError, match="at least 59"):
        quantile_order_index(58, 0.05, 0.05)


def test_sample_moments_textbook():
    mu, cov = sample_moments([1.0, 2.0, 3.0])
    assert mu == pytest.approx([2.0])
    assert np.allclose(cov, [[1.0]])


def test_sample_moments_identical_samples_get_ridge():
    _, cov = sample_moments(np.ones((5, 3)) * 2.0)
    assert np.all(np.linalg.eigvalsh(cov) > 0)


def test_sample_moments_matches_two_pass_reference():
    E = np.random.default_rng(0).normal(size=(50, 3)) * [1.0, 2.0, 0.5]
    mu, cov = sample_moments(E)
    m = sum(E) / len(E)
    ref = sum(np.outer(e - m, e - m) for e in E) / (len(E) - 1)
    assert np.max(np.abs(cov - ref)) <= 1e-10


def test_ellipsoid_radius_is_largest_at_minimal_size():
    rng = np.random.default_rng(1)
    shape, size = rng.normal(size=(100, 2)), rng.normal(size=(59, 2))
    s = build_ellipsoid_set(np.zeros(2), shape, size, 0.05, 0.05, wide_box(2))
    assert s.n_star == 59
    assert s.alpha == pytest.approx(np.sort(s.radii)[-1])


def test_ellipsoid_degenerates_to_center():
    rng = np.random.default_rng(2)
    shape = rng.normal(size=(30, 2))
    mu = shape.mean(axis=0)
    s = build_ellipsoid_set(np.zeros(2), shape, np.tile(mu, (59, 1)), 0.05, 0.05, wide_box(2))
    assert s.alpha == pytest.approx(0.0, abs=1e-12)
    assert s.contains(s.center)
    assert not s.contains(s.center + 1e-3)


def test_variants_order_and_fraction_index():
    rng = np.random.default_rng(3)
    E = rng.normal(size=(100, 3))
    all_set = build_ellipsoid_variant(np.zeros(3), E, "all", wide_box(3))
    frac = build_ellipsoid_variant(np.zeros(3), E, "fraction", wide_box(3), eps=0.05)
    assert all_set.alpha >= frac.alpha
    assert frac.alpha == pytest.approx(np.sort(frac.radii)[94])
    assert all(all_set.contains(e) for e in E)


def test_variant_rejects_unknown_mode():
    with pytest.raises(ValueError):
        build_ellipsoid_variant(np.zeros(2), np.eye(2), "median", wide_box(2))


def test_membership_boundary_rule():
    s = EllipsoidCapSet(wide_box(2), np.zeros(2), np.eye(2), 1.0)
    assert s.contains(np.zeros(2))
    assert s.contains([1.0, 0.0])
    assert not s.contains([math.sqrt(1.0 + 1e-3), 0.0])


def test_ellipsoid_respects_the_box():
    box = BoxSet(np.zeros(2), np.ones(2))
    s = EllipsoidCapSet(box, np.full(2, 0.9), np.eye(2), 1.0)
    assert not s.contains([1.5, 0.9])


def test_coverage_on_size_split_and_points_outside():
    rng = np.random.default_rng(4)
    shape, size = rng.normal(size=(80, 2)), rng.normal(size=(124, 2))
    s = build_ellipsoid_set(np.zeros(2), shape, size, 0.05, 0.05, wide_box(2))
    assert coverage(s, size) >= (s.n_star - 1) / len(size)
    assert s.points_outside() == len(size) - s.n_star


def test_alpha_monotone_in_eps_and_delta():
    rng = np.random.default_rng(5)
    shape, size = rng.normal(size=(80, 2)), rng.normal(size=(150, 2))
    a = [build_ellipsoid_set(np.zeros(2), shape, size, e, 0.05, wide_box(2)).alpha
         for e in (0.05, 0.1, 0.2)]
    assert a[0] >= a[1] >= a[2]
    out = [build_ellipsoid_set(np.zeros(2), shape, size, 0.1, d, wide_box(2)).points_outside()
           for d in (0.01, 0.05, 0.1, 0.3)]
    assert out == sorted(out)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_ellipsoid_membership_is_symmetric(v):
    cov = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 0.5]])
    s = EllipsoidCapSet(wide_box(3), np.array([1.0, -1.0, 0.5]), cov, 2.0)
    v = np.asarray(v)
    assert s.contains(s.center + v) == s.contains(s.center - v)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_sets_stay_inside_the_box(seed):
    rng = np.random.default_rng(seed)
    box = BoxSet(-np.ones(2), np.ones(2))
    s = build_ellipsoid_variant(np.zeros(2), rng.normal(size=(20, 2)), "all", box)
    pts = rng.uniform(-3, 3, size=(200, 2))
    for p in pts:
        if s.contains(p):
            assert box.contains(p)


def test_reconstruction_picks_largest_cost_at_minimal_size():
    _, sys, u_hat = small_case()
    from robust_uc.robust import master_problem

    compact = build_compact_form(sys)
    x0, *_ = master_problem(sys, u_hat.ravel(), [(u_hat.ravel(), True)], compact)
    rng = np.random.default_rng(6)
    E = rng.normal(scale=1.0, size=(59, u_hat.size))
    box = BoxSet(u_hat.ravel() * 0.4, u_hat.ravel() * 1.6)
    s = reconstruct_set(x0, u_hat.ravel(), E, 0.05, 0.05, box, compact)
    assert s.n_star == 59
    assert s.beta == pytest.approx(np.max(s.b_values))
    assert s.points_outside() == 0


def test_reconstruction_infinite_level_is_the_box():
    _, sys, u_hat = small_case()
    from robust_uc.robust import master_problem

    compact = build_compact_form(sys)
    x0, *_ = master_problem(sys, u_hat.ravel(), [(u_hat.ravel(), True)], compact)
    box = BoxSet(u_hat.ravel() * 0.4, u_hat.ravel() * 1.6)
    # shocks far beyond any reserve make every re-dispatch infeasible
    E = np.full((59, u_hat.size), 500.0)
    s = reconstruct_set(x0, u_hat.ravel(), E, 0.05, 0.05, box, compact)
    assert math.isinf(s.beta) and s.is_box
    assert s.contains(box.upper)


def test_error_dataset_splits_and_csv_round_trip(tmp_path):
    E = np.arange(24, dtype=float).reshape(8, 3)
    ds = ErrorDataset.chronological(E, {"shape": 3, "size": 4})
    assert ds.split("size").tolist() == E[3:7].tolist()
    path = tmp_path / "errors.csv"
    ds.to_csv(path, 3, 1)
    back = ErrorDataset.from_csv(path, 3)
    assert np.array_equal(back.samples, E)
    with pytest.raises(ValueError):
        ErrorDataset.chronological(E, {"shape": 5, "size": 4})
