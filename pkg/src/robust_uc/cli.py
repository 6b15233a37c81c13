"""Command line entry point ``robust-uc``.

Exit codes: 0 success (for solve, only when C&CG converged), 1 run failure or
non-convergence, 2 bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .io import atomic_write_text
from .pipeline import (VARIANTS, CaseConfig, RunReport, choose_weight, evaluate_out_of_sample,
                       load_case, read_table, run_method, sweep, train_case_surrogate, write_table)
from .surrogate import SurrogateModel, optimize_weights
from .synthetic import SyntheticSpec, generate_synthetic_case
from .system import CommitmentSchedule

log = logging.getLogger("robust_uc")


def _emit(line: str) -> None:
    print(line, file=sys.stderr, flush=True)


def _write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _config(args, **extra) -> CaseConfig:
    kw = dict(case=args.case, eps=args.eps, delta=args.delta, strict=args.strict, tol=args.tol,
              max_iter=args.max_iter, seed=args.seed, target=args.target)
    kw.update(extra)
    return CaseConfig(**kw)


def _load_weight(path, n_methods):
    d = _read_json(path)
    w = np.asarray(d["weight"] if isinstance(d, dict) else d, float)
    if w.size != n_methods:
        raise ValueError(f"{path}: weight has {w.size} entries, expected {n_methods}")
    return w


def cmd_gen(args) -> int:
    spec = SyntheticSpec(n_days=args.days)
    generate_synthetic_case(spec, args.seed, args.out)
    _emit(json.dumps({"event": "generated", "case": str(Path(args.out) / "case.json")}))
    return 0


def cmd_train(args) -> int:
    cfg = _config(args, train_days=args.train_days, weight_step=args.weight_step,
                  dirichlet_weights=args.dirichlet, pca_components=args.components,
                  hidden=tuple(args.hidden), epochs=args.epochs, lr=args.lr, l2=args.l2)
    case = load_case(cfg)
    model, table, fit = train_case_surrogate(case, cfg, log_sink=_emit)
    model.save(args.out)
    if args.table:
        table.to_csv(args.table)
    _emit(json.dumps({"event": "trained", "rows": len(table.cost), "epochs": fit.epochs,
                      "train_loss": fit.train_loss, "val_loss": fit.val_loss}))
    return 0


def cmd_optimize(args) -> int:
    variant = {"milp": "PROPOSED", "pso": "PSO", "mse": "P2"}[args.method]
    cfg = _config(args, variant=variant, pso_evals=args.pso_evals)
    case = load_case(cfg)
    model = SurrogateModel.load(args.surrogate) if args.surrogate else None
    if args.method == "milp":
        if model is None:
            raise ValueError("--surrogate is required for the milp method")
        w, predicted = optimize_weights(model, case.bundle(int(case.blocks["test"][cfg.target])))
    else:
        w, predicted = choose_weight(case, cfg, model, log_sink=_emit), None
    _write_json(args.out, {"weight": w.tolist(), "method": args.method, "predicted_cost": predicted})
    return 0


def cmd_solve(args) -> int:
    cfg = _config(args, variant=args.variant, pso_evals=args.pso_evals)
    case = load_case(cfg)
    model = SurrogateModel.load(args.surrogate) if args.surrogate else None
    weight = _load_weight(args.weight, case.n_methods) if args.weight else None
    rep = run_method(case, cfg, model, weight, log_sink=_emit)
    _write_json(args.out, rep.to_dict())
    return 0 if rep.converged else 1


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    case = load_case(cfg)
    rep = _read_json(args.report)
    if rep.get("schedule") is None:
        raise ValueError(f"{args.report}: report has no schedule")
    x = CommitmentSchedule.from_dict(rep["schedule"]).to_vector()
    w = np.asarray(rep["weight"], float)
    day = int(case.blocks["test"][cfg.target])
    u_hat = np.tensordot(w, case.predictions[:, day], axes=1)
    test = np.tensordot(w, case.method_errors(case.blocks["test"]), axes=1)
    rate, cost = evaluate_out_of_sample(case.system, x, u_hat, test, case.truth[day])
    out = {"feasible_rate": rate, "test_total_cost": cost, "n_test": len(test)}
    if args.out:
        _write_json(args.out, out)
    print(json.dumps(out))
    return 0


def _parse_values(parameter, text):
    if parameter == "weight":
        return [np.asarray([float(v) for v in item.split(":")]) for item in text.split(",")]
    return [float(v) for v in text.split(",")]


def cmd_sweep(args) -> int:
    cfg = _config(args, variant=args.variant)
    case = load_case(cfg)
    model = SurrogateModel.load(args.surrogate) if args.surrogate else None
    rows = sweep(case, cfg, args.parameter, _parse_values(args.parameter, args.values), model)
    write_table(args.out, rows)
    return 0 if all(not r["error"] for r in rows) else 1


REPORT_COLUMNS = ("variant", "day", "objective", "first_stage_cost", "feasible_rate",
                  "test_total_cost", "wall_time", "converged", "weight")


def cmd_report(args) -> int:
    rows = []
    for path in args.reports:
        d = _read_json(path)
        row = {k: d.get(k) for k in REPORT_COLUMNS}
        row["weight"] = ";".join(f"{v:.6g}" for v in d.get("weight", []))
        rows.append(row)
    write_table(args.out, rows, REPORT_COLUMNS)
    for r in rows:
        obj = r["objective"]
        obj = f"{obj:.4f}" if isinstance(obj, (int, float)) and math.isfinite(obj) else str(obj)
        print(f"{r['variant']:<9} objective={obj} feasible_rate={r['feasible_rate']} "
              f"test_cost={r['test_total_cost']}")
    return 0


def _case_args(p):
    p.add_argument("--case", required=True, help="path to case.json")
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--strict", action="store_true", help="calibrate the cost level on the recon split")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target", type=int, default=0, help="offset of the scheduled day in the test split")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robust-uc")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic case")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--days", type=int, default=400)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train-surrogate", help="build the cost surrogate")
    _case_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="also write the training table as CSV")
    p.add_argument("--train-days", type=int, default=2)
    p.add_argument("--weight-step", type=float, default=0.1)
    p.add_argument("--dirichlet", type=int, default=50, help="extra random weights per day")
    p.add_argument("--components", type=int, default=3)
    p.add_argument("--hidden", type=int, nargs="+", default=[16, 16])
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--l2", type=float, default=1e-4)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("optimize-weights", help="pick the forecast-combination weight")
    _case_args(p)
    p.add_argument("--surrogate")
    p.add_argument("--method", choices=("milp", "pso", "mse"), default="milp")
    p.add_argument("--pso-evals", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("solve", help="schedule the target day with one variant")
    _case_args(p)
    p.add_argument("--variant", choices=VARIANTS, default="PROPOSED")
    p.add_argument("--surrogate")
    p.add_argument("--weight", help="JSON file with a fixed weight")
    p.add_argument("--pso-evals", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="re-score a report's schedule on the test split")
    _case_args(p)
    p.add_argument("--report", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="vary one parameter and tabulate the results")
    _case_args(p)
    p.add_argument("--variant", choices=VARIANTS, default="P2")
    p.add_argument("--parameter", choices=("eps", "delta", "n_size", "weight"), required=True)
    p.add_argument("--values", required=True,
                   help="comma separated; weights as colon separated entries, e.g. 1:0:0,0.5:0.5:0")
    p.add_argument("--surrogate")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="collect run reports into one CSV")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        _emit(json.dumps({"event": "error", "kind": type(exc).__name__, "message": str(exc)}))
        return 2
    except RuntimeError as exc:
        _emit(json.dumps({"event": "error", "kind": "RuntimeError", "message": str(exc)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
