import filecmp
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from robust_uc.cli import main
from robust_uc.pipeline import (VARIANT_TRAITS, CaseConfig, evaluate_out_of_sample, load_case,
                                read_table, run_method, sample_case_path, sweep,
                                train_case_surrogate, write_table)
from robust_uc.synthetic import SyntheticSpec, error_covariance, generate_synthetic_case
from robust_uc.system import CommitmentSchedule

TINY = SyntheticSpec(n_days=260, horizon=2, base_load=(50.0,), profile=(0.9, 1.1),
                     gen_buses=(0, 0), error_sigma=(2.0,),
                     splits={"shape": 100, "size": 60, "recon": 30, "eval": 30, "test": 30})


def tiny_config(path, **kw):
    base = dict(case=str(path), eps=0.1, delta=0.1, weight_step=0.5, dirichlet_weights=0,
                train_days=1, epochs=200, pca_components=2)
    base.update(kw)
    return CaseConfig(**base)


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    generate_synthetic_case(TINY, 0, out)
    cfg = tiny_config(out / "case.json")
    case = load_case(cfg)
    model, table, _ = train_case_surrogate(case, cfg)
    return cfg, case, model, table


def test_sample_case_loads_with_declared_dimensions():
    case = load_case(CaseConfig(str(sample_case_path())))
    assert case.system.n_bus == 3 and case.system.T == 3 and case.system.n_gen == 2
    assert case.predictions.shape == (3, 400, 9)
    assert [len(case.blocks[k]) for k in ("shape", "size", "recon", "eval", "test")] == \
        [160, 80, 60, 40, 60]


def test_truncated_row_is_named(tmp_path):
    generate_synthetic_case(TINY, 1, tmp_path)
    lines = (tmp_path / "truth.csv").read_text().splitlines()
    lines[5] = ",".join(lines[5].split(",")[:-1])
    (tmp_path / "truth.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="row 6"):
        load_case(tiny_config(tmp_path / "case.json"))


def test_oversized_splits_rejected(tmp_path):
    spec = replace(TINY, n_days=300)
    generate_synthetic_case(spec, 2, tmp_path)
    with pytest.raises(ValueError, match="need"):
        load_case(tiny_config(tmp_path / "case.json", splits={"shape": 212, "size": 124}))


def test_config_validation():
    with pytest.raises(ValueError):
        CaseConfig("x", eps=1.0)
    with pytest.raises(ValueError):
        CaseConfig("x", variant="SP")
    with pytest.raises(ValueError):
        CaseConfig("x", seed=None)


def test_generation_is_byte_identical(tmp_path):
    generate_synthetic_case(TINY, 7, tmp_path / "a")
    generate_synthetic_case(TINY, 7, tmp_path / "b")
    for name in ("case.json", "system.json", "truth.csv", "forecast_m1.csv"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)


def test_generated_errors_follow_the_declared_covariance(tmp_path):
    spec = replace(TINY, n_days=2000, splits={"shape": 2, "size": 1, "test": 1})
    generate_synthetic_case(spec, 3, tmp_path)
    case = load_case(tiny_config(tmp_path / "case.json"))
    level = 1.0 + 0.05 * np.sin(2 * np.pi * np.arange(spec.n_days) / 7.0)
    base = np.outer(spec.base_load, spec.profile).ravel()
    common = case.truth - level[:, None] * base[None, :]
    S = np.cov(common.T)
    ref = error_covariance(spec)
    assert np.linalg.norm(S - ref) <= 0.1 * np.linalg.norm(ref)


def test_method_rmse_follows_noise_order():
    case = load_case(CaseConfig(str(sample_case_path())))
    err = case.method_errors(np.arange(len(case.days)))
    rmse = np.sqrt(np.mean(err**2, axis=(1, 2)))
    assert len(set(np.round(rmse, 6))) == 3
    assert rmse[1] == rmse.max()


def test_variant_matrix():
    calibrated = [v for v, t in VARIANT_TRAITS.items() if not t[0]]
    no_recon = [v for v, t in VARIANT_TRAITS.items() if not t[2] and t[0]]
    assert calibrated == ["RO1", "RO2"]
    assert no_recon == ["P1"]


def test_full_reserves_are_always_feasible(tiny):
    cfg, case, _, _ = tiny
    sys = case.system
    x = CommitmentSchedule.zeros(sys)
    x.theta[:] = 1.0
    x.theta_up[:, 0] = [1.0 - g.theta0 for g in sys.generators]
    u_hat = case.predictions[0, case.blocks["test"][0]]
    x.p[0] = u_hat
    x.r_up[:] = [[g.r_plus_max] * sys.T for g in sys.generators]
    x.r_dn[:] = [[min(g.r_minus_max, 20.0)] * sys.T for g in sys.generators]
    E = np.random.default_rng(0).normal(scale=2.0, size=(30, u_hat.size))
    rate, cost = evaluate_out_of_sample(sys, x.to_vector(), u_hat, E, u_hat + 1.0)
    assert rate == 1.0 and math.isfinite(cost)
    with pytest.raises(ValueError, match="empty"):
        evaluate_out_of_sample(sys, x.to_vector(), u_hat, np.zeros((0, u_hat.size)), u_hat)


def test_variants_run_and_order(tiny):
    cfg, case, model, _ = tiny
    reps = {v: run_method(case, replace(cfg, variant=v), model)
            for v in ("RO1", "RO2", "P1", "P2", "PROPOSED")}
    for r in reps.values():
        assert r.converged and 0.0 <= r.feasible_rate <= 1.0
        assert math.isfinite(r.objective)
    assert reps["RO1"].objective >= reps["RO2"].objective - 1e-6
    assert reps["RO1"].weight == reps["RO2"].weight == reps["P2"].weight
    assert reps["P1"].weight == reps["PROPOSED"].weight


def test_p2_and_proposed_differ_only_in_weight(tiny):
    cfg, case, model, _ = tiny
    w = np.array([0.25, 0.25, 0.5])
    a = run_method(case, replace(cfg, variant="P2"), weight=w)
    b = run_method(case, replace(cfg, variant="PROPOSED"), model, weight=w)
    assert a.objective == b.objective and a.feasible_rate == b.feasible_rate


def test_reports_are_deterministic(tiny):
    cfg, case, model, _ = tiny
    a = run_method(case, replace(cfg, variant="P1"), model).to_dict()
    b = run_method(case, replace(cfg, variant="P1"), model).to_dict()
    a.pop("wall_time"), b.pop("wall_time")
    assert a == b


def test_proposed_needs_a_surrogate(tiny):
    cfg, case, _, _ = tiny
    with pytest.raises(ValueError, match="surrogate"):
        run_method(case, replace(cfg, variant="PROPOSED"))


def test_sweep_records_failures_and_round_trips(tiny, tmp_path):
    cfg, case, model, _ = tiny
    rows = sweep(case, replace(cfg, variant="RO2"), "eps", [0.05, 0.2, 1.5])
    assert [bool(r["error"]) for r in rows] == [False, False, True]
    assert rows[0]["objective"] >= rows[1]["objective"] - 1e-6
    write_table(tmp_path / "s.csv", rows)
    back = read_table(tmp_path / "s.csv")
    assert [r["value"] for r in back] == [r["value"] for r in rows]
    assert float(back[0]["objective"]) == rows[0]["objective"]


def test_delta_sweep_points_outside_nondecreasing(tiny):
    cfg, case, model, _ = tiny
    rows = sweep(case, replace(cfg, variant="P1"), "delta", [0.01, 0.1, 0.3], model)
    outside = [r["points_outside"] for r in rows]
    assert outside == sorted(outside)


def test_cli_round_trip(tiny, tmp_path, capsys):
    cfg, case, model, _ = tiny
    sur = tmp_path / "sur.json"
    model.save(sur)
    args = ["--case", cfg.case, "--eps", "0.1", "--delta", "0.1"]
    assert main(["optimize-weights", *args, "--surrogate", str(sur), "--out",
                 str(tmp_path / "w.json")]) == 0
    w = json.loads((tmp_path / "w.json").read_text())["weight"]
    assert math.isclose(sum(w), 1.0)
    assert main(["solve", *args, "--variant", "PROPOSED", "--weight", str(tmp_path / "w.json"),
                 "--out", str(tmp_path / "r.json")]) == 0
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["converged"] and rep["ccg_log"]
    assert main(["evaluate", *args, "--report", str(tmp_path / "r.json")]) == 0
    ev = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert ev["feasible_rate"] == rep["feasible_rate"]
    assert main(["report", str(tmp_path / "r.json"), "--out", str(tmp_path / "t.csv")]) == 0
    assert read_table(tmp_path / "t.csv")[0]["variant"] == "PROPOSED"
    assert main(["sweep", *args, "--variant", "RO2", "--parameter", "weight", "--values",
                 "1:0:0,0:0:1", "--out", str(tmp_path / "sw.csv")]) == 0
    assert len(read_table(tmp_path / "sw.csv")) == 2


def test_cli_bad_input_exit_code(tmp_path):
    assert main(["solve", "--case", str(tmp_path / "missing.json"), "--out",
                 str(tmp_path / "r.json")]) == 2


def test_cli_gen(tmp_path):
    assert main(["gen", "--out", str(tmp_path / "c"), "--seed", "1", "--days", "50"]) == 0
    assert (tmp_path / "c" / "case.json").exists()
