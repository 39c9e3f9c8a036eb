"""Command-line pipeline; every stage reads and writes plain CSV / JSON / SVG files."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import core, mlp, oracle, report, synthetic
from .baselines import PermutationResult, permutation_importance, worker_count
from .classic_metrics import DEFAULT_EPS_REL, SensitivitySummary, classic_summaries
from .errors import NumericalError, OracleMismatch, ValidationError
from .metric_sensitivity import DEFAULT_GRID, AlphaCurve, AlphaGrid, all_alpha_curves

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _write(path, text):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    path.write_text(text)


def _read_json(path, kind=None):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if kind is not None and (doc.get("schema") != report.SCHEMA_ID or doc.get("kind") != kind):
        raise ValidationError(f"{path}: expected a {report.SCHEMA_ID} '{kind}' document")
    return doc


def _features_for(model: mlp.MlpModel, dataset: core.Dataset) -> core.Dataset:
    """Select the model's input columns and apply its stored preprocessing."""
    names = model.feature_names
    if names:
        missing = [n for n in names if n not in dataset.feature_names]
        if missing:
            raise ValidationError(f"data lacks model features {missing}")
        cols = [dataset.feature_names.index(n) for n in names]
        dataset = core.Dataset(dataset.features[:, cols], names, dataset.target, dataset.target_name)
    if model.preprocessing is not None:
        dataset = model.preprocessing.transform(dataset)
        if dataset.target is not None and model.preprocessing.target_min is not None:
            dataset = dataset.with_target(model.preprocessing.transform_target(dataset.target))
    return dataset


def _function_inputs(fun, dataset: core.Dataset) -> core.Dataset:
    """Pick the X1..Xn columns a named function reads."""
    names = synthetic.feature_names(fun.n_features)
    missing = [n for n in names if n not in dataset.feature_names]
    if missing:
        raise ValidationError(f"{fun.name} needs columns {list(names)}; missing {missing}")
    cols = [dataset.feature_names.index(n) for n in names]
    return core.Dataset(dataset.features[:, cols], names, dataset.target, dataset.target_name)


def cmd_synth(args):
    fun = synthetic.NAMED_FUNCTIONS[args.function]()
    data = synthetic.with_target(fun, synthetic.gen_normal_inputs(args.n, fun.n_features, args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    core.write_csv(out / "data.csv", data)
    core.write_jacobian(out / "jacobian.csv", synthetic.analytic_jacobian(fun, data))
    print(f"wrote {out / 'data.csv'} and {out / 'jacobian.csv'} ({data.n_samples} samples)")


def cmd_train(args):
    data = core.read_csv(args.data, args.target)
    if not 0 <= args.test_fraction < 1:
        raise ValidationError("--test-fraction must lie in [0, 1)")
    order = np.random.default_rng(args.seed).permutation(data.n_samples)
    n_test = int(round(args.test_fraction * data.n_samples))
    test_idx, train_idx = np.sort(order[:n_test]), np.sort(order[n_test:])
    train_raw = core.Dataset(data.features[train_idx], data.feature_names, data.target[train_idx], args.target)
    train_set, params = core.preprocess(train_raw)
    hidden = [int(h) for h in str(args.hidden).split(",") if h.strip()]
    model = mlp.init_model([data.n_features] + hidden + [1], args.activation, args.seed)
    config = mlp.TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr,
                             optimizer=args.optimizer, seed=args.seed)
    model, trace = mlp.train(model, train_set, config)
    model = replace(model, preprocessing=params, feature_names=data.feature_names)
    mlp.write_model(args.out, model)
    train_r2 = mlp.r_squared(train_set.target, mlp.forward(model, train_set.features))
    msg = f"trained {model.sizes}: final mse {trace[-1]:.6g}, train R2 {train_r2:.4f}"
    if n_test:
        test_raw = core.Dataset(data.features[test_idx], data.feature_names, data.target[test_idx], args.target)
        test_set = _features_for(model, test_raw)
        msg += f", test R2 {mlp.r_squared(test_set.target, mlp.forward(model, test_set.features)):.4f}"
    print(msg)




def cmd_jacobian(args):
    model = mlp.read_model(args.model)
    data = _features_for(model, core.read_csv(args.data, args.target))
    jac = mlp.dataset_jacobian(model, data)
    out = Path(args.out)
    if jac.n_outputs > 1 and out.suffix.lower() != ".json":
        raise ValidationError("multi-output models need a .json jacobian file")
    core.write_jacobian(out, jac)
    print(f"wrote {out} ({jac.n_samples} x {jac.n_outputs} x {jac.n_features})")


def cmd_curves(args):
    jac = core.read_jacobian(args.jac)
    grid = AlphaGrid.parse(args.alphas) if args.alphas else DEFAULT_GRID
    curves = all_alpha_curves(jac, args.output, grid)
    diags = report.diagnose(curves, args.flat_tol, args.irrel_tol)
    doc = {
        "schema": report.SCHEMA_ID,
        "kind": "curves",
        "output_index": args.output,
        "feature_names": list(jac.feature_names),
        "alphas": list(grid.alphas),
        "flat_tol": args.flat_tol,
        "irrel_tol": args.irrel_tol,
        "curves": [c.to_dict() for c in curves],
        "diagnostics": [d.to_dict() for d in diags],
    }
    _write(args.out, report.dumps(doc))
    if args.svg:
        _write(args.svg, report.render_alpha_curves(curves, diags))
    for c, d in zip(curves, diags):
        print(f"{c.name}: ms^1={c.values[0]:.4g} ms^inf={c.asymptote:.4g} -> {report.verdict(d)}")


def cmd_classic(args):
    jac = core.read_jacobian(args.jac)
    summaries = classic_summaries(jac, args.output, args.eps)
    doc = {"schema": report.SCHEMA_ID, "kind": "classic", "output_index": args.output, "eps_rel": args.eps,
           "summaries": [s.to_dict() for s in summaries]}
    _write(args.out, report.dumps(doc))
    if args.svg:
        _write(args.svg, report.render_sensitivity_plots(summaries))
    for s in summaries:
        print(f"{s.name}: avg={s.s_avg:.4g} sd={s.s_sd:.4g} sq={s.s_sq:.4g} -> {s.label}")


def cmd_permute(args):
    if (args.model is None) == (args.function is None):
        raise ValidationError("give exactly one of --model or --function")
    data = core.read_csv(args.data, args.target)
    if args.model is not None:
        model = mlp.read_model(args.model)
        data = _features_for(model, data)

        def predict(x):
            return mlp.forward(model, x)
    else:
        predict = synthetic.NAMED_FUNCTIONS[args.function]()
        data = _function_inputs(predict, data)
    result = permutation_importance(predict, data, None, args.metric, args.repeats, args.seed, worker_count())
    doc = {"schema": report.SCHEMA_ID, "kind": "permutation", **result.to_dict()}
    _write(args.out, report.dumps(doc))
    if args.csv:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(result.to_csv_rows())
        _write(args.csv, buf.getvalue())
    for name, imp, sd in zip(result.feature_names, result.importances, result.std):
        print(f"{name}: {imp:.4g} +/- {sd:.2g}")


def cmd_shapley(args):
    fun = synthetic.NAMED_FUNCTIONS[args.function]()
    data = _function_inputs(fun, core.read_csv(args.data, args.target))
    phi = synthetic.additive_shapley(fun, data, data.features)
    gap = np.abs(phi.sum(axis=1) - (fun(data.features) - fun(data.features).mean()))
    doc = {
        "schema": report.SCHEMA_ID,
        "kind": "shapley",
        "function": args.function,
        "mean_abs": {n: float(v) for n, v in zip(data.feature_names, np.abs(phi).mean(axis=0))},
        "efficiency_max_error": float(gap.max()),
    }
    _write(args.out, report.dumps(doc))
    if args.values_csv:
        core.write_csv(args.values_csv, core.Dataset(phi, data.feature_names))
    for n, v in doc["mean_abs"].items():
        print(f"{n}: mean |phi| = {v:.4g}")


def cmd_report(args):
    cdoc = _read_json(args.curves, "curves")
    curves = [AlphaCurve.from_dict(c) for c in cdoc["curves"]]
    flat = args.flat_tol if args.flat_tol is not None else cdoc.get("flat_tol", report.DEFAULT_FLAT_TOL)
    irrel = args.irrel_tol if args.irrel_tol is not None else cdoc.get("irrel_tol", report.DEFAULT_IRREL_TOL)
    diags = report.diagnose(curves, flat, irrel)
    summaries = None
    if args.classic:
        summaries = [SensitivitySummary.from_dict(s) for s in _read_json(args.classic, "classic")["summaries"]]
    perm = PermutationResult.from_dict(_read_json(args.perm, "permutation")) if args.perm else None
    shap = _read_json(args.shap, "shapley")["mean_abs"] if args.shap else None
    doc, markdown = report.emit_report(curves, diags, summaries, perm, shap)
    _write(args.out, markdown)
    json_out = args.json or str(Path(args.out).with_suffix(".json"))
    _write(json_out, report.dumps(doc))
    print(f"wrote {args.out} and {json_out}")


def cmd_verify(args):
    threads = worker_count()
    rows = oracle.verify_sweep(args.seed, args.instances, args.restarts, args.rtol, threads)
    print(f"{'(p, q)':>14} {'n':>4} {'max gap':>11} {'max excess':>11}  result")
    for row in rows:
        print(f"{str(row.norms):>14} {row.instances:>4} {row.max_gap:>11.3e} {row.max_excess:>11.3e}  "
              f"{'PASS' if row.passed else 'FAIL'}")
    failed = [r for r in rows if not r.passed]
    if failed:
        raise OracleMismatch(f"{len(failed)} norm pairs disagree with the direct search")
    print(f"all {sum(r.instances for r in rows)} instances agree within {args.rtol:g}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="alphasens", description="Metric sensitivity analysis with alpha-curves.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the cubic-root dataset and its analytic jacobian")
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--function", choices=sorted(synthetic.NAMED_FUNCTIONS), default="cubic-root")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit an MLP regressor")
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--hidden", default="32", help="hidden widths, comma separated")
    p.add_argument("--activation", choices=sorted(mlp.ACTIVATIONS), default="tanh")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("jacobian", help="input jacobian of a trained model over a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_jacobian)

    p = sub.add_parser("curves", help="alpha-curves and curve diagnostics")
    p.add_argument("--jac", required=True)
    p.add_argument("--alphas", default=None, help="lo:hi:geomK, lo:hi:linK or a comma list")
    p.add_argument("--output", type=int, default=0, help="output index for multi-output jacobians")
    p.add_argument("--flat-tol", type=float, default=report.DEFAULT_FLAT_TOL)
    p.add_argument("--irrel-tol", type=float, default=report.DEFAULT_IRREL_TOL)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("classic", help="mean / std / rms derivative summaries")
    p.add_argument("--jac", required=True)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS_REL)
    p.add_argument("--output", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_classic)

    p = sub.add_parser("permute", help="permutation importance")
    p.add_argument("--model", default=None)
    p.add_argument("--function", choices=sorted(synthetic.NAMED_FUNCTIONS), default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--metric", choices=("mse", "mae"), default="mse")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_permute)

    p = sub.add_parser("shapley", help="exact Shapley values for a named additive function")
    p.add_argument("--function", choices=sorted(synthetic.NAMED_FUNCTIONS), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--values-csv", default=None)
    p.set_defaults(func=cmd_shapley)

    p = sub.add_parser("report", help="combine analysis artifacts into Markdown + JSON")
    p.add_argument("--curves", required=True)
    p.add_argument("--classic", default=None)
    p.add_argument("--perm", default=None)
    p.add_argument("--shap", default=None)
    p.add_argument("--flat-tol", type=float, default=None)
    p.add_argument("--irrel-tol", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify", help="closed form vs direct operator-norm search")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--rtol", type=float, default=1e-3)
    p.set_defaults(func=cmd_verify)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except NumericalError as exc:
        print(f"alphasens: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"alphasens: no such file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValidationError, OSError, KeyError) as exc:
        print(f"alphasens: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main():
    sys.exit(run())
