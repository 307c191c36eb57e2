"""Command-line interface: ``dvqr fit | predict | stress | simulate``.

Exit codes: 0 success, 2 user or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import io as model_io
from .bicop import CopulaNumericError, Criterion
from .dvine import fit_quantreg, predict_quantile, stress_predict
from .margins import DegenerateMarginError
from .simbench import ScenarioSpec, run_mise_study

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 2, 3


class UserError(Exception):
    """Bad input or configuration; reported with exit code 2."""


def read_table(path, delimiter=","):
    """Read a numeric table with a header row; returns ``(names, data)``."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise UserError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows:
        raise UserError(f"{path} is empty")
    names = [h.strip() for h in rows[0]]
    if any(not h for h in names):
        raise UserError(f"{path}: header has an empty column name")
    if len(set(names)) != len(names):
        raise UserError(f"{path}: duplicate column names in header")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(names):
            raise UserError(f"{path} row {lineno}: {len(row)} cells, header has {len(names)}")
        values = []
        for name, cell in zip(names, row):
            cell = cell.strip()
            if not cell:
                raise UserError(f"{path} row {lineno}: blank cell in column {name!r}")
            try:
                x = float(cell)
            except ValueError:
                raise UserError(f"{path} row {lineno}: non-numeric value {cell!r} in column {name!r}") from None
            if not np.isfinite(x):
                raise UserError(f"{path} row {lineno}: non-finite value {cell!r} in column {name!r}")
            values.append(x)
        data.append(values)
    if not data:
        raise UserError(f"{path} has a header but no data rows")
    return names, np.array(data)


def write_table(path, names, rows, delimiter=","):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(names)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _alpha_list(values, default=(0.5,)):
    alphas = sorted(set(values or default))
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise UserError(f"alpha {a} must lie strictly inside (0, 1)")
    return alphas


def _load(path):
    try:
        return model_io.load_model(path)
    except OSError as exc:
        raise UserError(f"cannot read model {path}: {exc.strerror}") from None
    except model_io.ModelFormatError as exc:
        raise UserError(f"invalid model document {path}: {exc}") from None


def cmd_fit(args):
    names, data = read_table(args.input, args.delimiter)
    if args.response not in names:
        raise UserError(f"response column {args.response!r} not found; columns are {', '.join(names)}")
    if not 0.0 <= args.indep_level <= 1.0:
        raise UserError("--indep-level must lie in [0, 1]")
    try:
        model = fit_quantreg(data, names, args.response, Criterion(args.criterion), args.indep_level)
    except DegenerateMarginError as exc:
        raise UserError(str(exc)) from None
    model_io.save_model(model, args.output)
    vine = model.vine
    if not vine.order:
        print("no covariates selected; predictions are marginal quantiles of", model.response)
    else:
        print(f"order: {model.order_label()} ({', '.join(model.selected)})")
        labels = ["V"] + [f"U{j + 1}" for j in vine.order]
        for t, tree in enumerate(vine.pairs, start=1):
            for e, cop in enumerate(tree):
                cond = labels[e + 1:e + t]
                name = f"{labels[e]},{labels[e + t]}" + (f";{','.join(cond)}" if cond else "")
                rot = f" rot{cop.rotation}" if cop.rotation else ""
                params = ", ".join(f"{p:.4g}" for p in cop.params)
                print(f"tree {t} {name}: {cop.family.value}{rot} ({params})")
        print(f"{vine.criterion.value} path: " + ", ".join(f"{c:.4f}" for c in vine.cll_path))
    print(f"model written to {args.output}")
    return EXIT_OK


def _covariate_matrix(model, names, data):
    x = np.full((data.shape[0], len(model.covariates)), np.nan)
    for j in model.vine.order:
        col = model.covariates[j]
        if col not in names:
            raise UserError(f"covariate column {col!r} required by the model is missing from the input")
        x[:, j] = data[:, names.index(col)]
    return x


def cmd_predict(args):
    model = _load(args.model)
    alphas = _alpha_list(args.alpha)
    names, data = read_table(args.input, args.delimiter)
    x = _covariate_matrix(model, names, data)
    q = predict_quantile(model, np.array(alphas), x)
    write_table(args.output, [f"q{a:g}" for a in alphas], q, args.delimiter)
    print(f"{q.shape[0]} rows x {len(alphas)} levels written to {args.output}")
    return EXIT_OK


def _parse_kappa(items):
    spec = {}
    for item in items or ():
        name, sep, levels = item.partition("=")
        if not sep or not name or not levels:
            raise UserError(f"--kappa expects NAME=LEVEL[,LEVEL...], got {item!r}")
        try:
            vals = [float(v) for v in levels.split(",")]
        except ValueError:
            raise UserError(f"--kappa {item!r}: levels must be numbers") from None
        for v in vals:
            if not 0.0 < v < 1.0:
                raise UserError(f"--kappa {item!r}: level {v} must lie strictly inside (0, 1)")
        spec[name.strip()] = vals
    return spec


def cmd_stress(args):
    model = _load(args.model)
    alphas = _alpha_list(args.alpha)
    kappa = _parse_kappa(args.kappa)
    for name in kappa:
        if name not in model.covariates:
            raise UserError(f"--kappa names unknown covariate {name!r}")
        if model.covariates.index(name) not in model.vine.order:
            print(f"note: {name} is not in the fitted vine; its stress level has no effect", file=sys.stderr)
    lengths = {len(v) for v in kappa.values()} - {1}
    if len(lengths) > 1:
        raise UserError("--kappa lists must have equal length (or a single level)")
    n_rows = lengths.pop() if lengths else 1
    selected = model.selected
    grid = np.full((n_rows, len(selected)), 0.5)
    for i, name in enumerate(selected):
        if name in kappa:
            vals = kappa[name]
            grid[:, i] = vals if len(vals) == n_rows else vals[0]
    out = np.column_stack([np.atleast_1d(stress_predict(model, grid, a)) for a in alphas])
    out = out.reshape(n_rows, len(alphas))
    if args.raw_scale:
        out = model.response_margin.ppf(out)
    prefix = "q" if args.raw_scale else "level"
    header = [f"kappa_{n}" for n in selected] + [f"{prefix}{a:g}" for a in alphas]
    write_table(args.output, header, np.column_stack([grid, out]), args.delimiter)
    print(f"{n_rows} stress scenario(s) written to {args.output}")
    return EXIT_OK


def _scenario_param(kind, param):
    if param is None:
        return {"c3": "delta1", "t5": "R1", "m5": "sigma1"}[kind]
    try:
        return float(param)
    except ValueError:
        return param


def cmd_simulate(args):
    try:
        spec = ScenarioSpec(args.scenario, _scenario_param(args.scenario, args.param), args.margins,
                            args.ntrain, tuple(_alpha_list(args.alpha)), args.reps)
    except (ValueError, TypeError) as exc:
        raise UserError(f"invalid scenario: {exc}") from None
    report = run_mise_study(spec, seed=args.seed, timing=args.timing)
    text = report.to_json() if args.output.endswith(".json") else report.to_csv(args.delimiter)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    for row in report.rows:
        print(f"{row['method']:>5} alpha={row['alpha']:g} mise={row['mise']:.5g} rmise={row['rmise']:.3g}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="dvqr", description="D-vine copula quantile regression")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=False):
        p.add_argument("--output", required=True, help="output file")
        p.add_argument("--delimiter", default=",", help="field delimiter (default ',')")
        if model:
            p.add_argument("--model", required=True, help="model document written by 'fit'")

    p = sub.add_parser("fit", help="fit margins and a regression D-vine")
    p.add_argument("--input", required=True, help="delimited table with header")
    p.add_argument("--response", required=True, help="response column name")
    p.add_argument("--criterion", choices=[c.value for c in Criterion], default="aic")
    p.add_argument("--indep-level", type=float, default=0.05, help="independence test level")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="conditional quantiles for new covariate rows")
    p.add_argument("--input", required=True, help="covariate table with header")
    p.add_argument("--alpha", type=float, action="append", help="quantile level (repeatable)")
    common(p, model=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("stress", help="response quantile levels with covariates pinned at PIT levels")
    p.add_argument("--kappa", action="append", metavar="NAME=L1[,L2,...]",
                   help="stress levels of a covariate (repeatable); others stay at 0.5")
    p.add_argument("--alpha", type=float, action="append", help="quantile level (repeatable, default 0.5)")
    p.add_argument("--raw-scale", action="store_true", help="report response values instead of u-levels")
    common(p, model=True)
    p.set_defaults(func=cmd_stress)

    p = sub.add_parser("simulate", help="MISE study on a simulation scenario")
    p.add_argument("--scenario", required=True, type=str.lower, choices=["c3", "t5", "m5"])
    p.add_argument("--margins", type=str.lower, choices=["m1", "m2"], default="m1")
    p.add_argument("--param", help="delta1|delta2|<delta> (c3), R1|R2 (t5), sigma1|sigma2|<sigma> (m5)")
    p.add_argument("--ntrain", type=int, default=300)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, action="append", help="quantile level (repeatable, default 0.5)")
    p.add_argument("--timing", action="store_true", help="fill the seconds column (output then varies run to run)")
    common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (CopulaNumericError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
