"""Command-line interface: ``prerules <command> [options]``.

Commands:
    fit         fit an ensemble to a CSV file; writes a model file and a term table
    predict     predictions for new data
    explain     per-row decomposition of predictions into term contributions
    importance  term and variable importances
    pd          partial dependence on one or two variables
    cv          repeated k-fold cross-validation of the pipeline
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__, glm
from .dataset import DataSet, load_csv, read_schema
from .ensemble import FitConfig, explain, fit_pre, load_model, predict, save_model, term_table
from .errors import PreError
from .evaluate import repeated_cv
from .interpret import importance_csv, partial_dependence, term_importance, variable_importance

THREADS_ENV = "PRERULES_THREADS"


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as a single line."""

    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise _UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        if value < 1:
            raise _UsageError(f"{THREADS_ENV} must be at least 1")
        return value
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

# FitConfig fields settable by flags of `fit` and `cv`
_CONFIG_FLAGS = (
    "family", "type", "ntrees", "learnrate", "sampfrac", "maxdepth", "minsplit", "minbucket",
    "alpha", "algorithm", "mtry", "winsor_lower", "winsor_upper", "n_lambda", "lambda_min_ratio",
    "nfolds", "select", "cv_loss", "lam", "constraint",
)


def _add_data_options(p, response: bool):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--schema", help="JSON schema fixing column kinds and levels")
    p.add_argument("--ignore", action="append", default=[], metavar="COLUMN",
                   help="column to leave out of the predictors (repeatable)")
    if response:
        p.add_argument("--response", action="append", default=None, metavar="COLUMN",
                       help="response column (repeat for a multivariate response)")


def _add_config_options(p):
    p.add_argument("--config", help="JSON file of fit settings; command-line flags take precedence")
    p.add_argument("--family", choices=glm.FAMILIES)
    p.add_argument("--type", choices=("rules", "linear", "both"))
    p.add_argument("--ntrees", type=int)
    p.add_argument("--learnrate", type=float)
    p.add_argument("--sampfrac", type=float)
    p.add_argument("--maxdepth", type=int)
    p.add_argument("--minsplit", type=int)
    p.add_argument("--minbucket", type=int)
    p.add_argument("--alpha", type=float, help="significance level of the split-variable test")
    p.add_argument("--algorithm", choices=("unbiased", "exhaustive"))
    p.add_argument("--mtry", type=int)
    p.add_argument("--winsor-lower", dest="winsor_lower", type=float)
    p.add_argument("--winsor-upper", dest="winsor_upper", type=float)
    p.add_argument("--n-lambda", dest="n_lambda", type=int)
    p.add_argument("--lambda-min-ratio", dest="lambda_min_ratio", type=float)
    p.add_argument("--nfolds", type=int, help="folds for choosing lambda")
    p.add_argument("--select", choices=("1se", "min"))
    p.add_argument("--cv-loss", dest="cv_loss", choices=("mse", "brier", "deviance"))
    p.add_argument("--lambda", dest="lam", type=float, help="fit at this lambda instead of cross-validating")
    p.add_argument("--constraint", choices=("none", "nonneg", "nonpos"))
    p.add_argument("--confirm", action="append", default=None, metavar="TERM",
                   help="confirmatory (unpenalized) rule, e.g. \"trt in {TES}\", or numeric variable")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prerules", description="Prediction rule ensembles.")
    parser.add_argument("--version", action="version", version=f"prerules {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="seed for all randomness")
    common.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or CPU count)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", parents=[common], help="fit an ensemble")
    _add_data_options(p, response=True)
    _add_config_options(p)
    p.add_argument("--model", required=True, help="output model file (JSON)")
    p.add_argument("--terms", help="output term table (CSV); default: <model>.terms.csv")

    p = sub.add_parser("predict", parents=[common], help="predict new data")
    _add_data_options(p, response=False)
    p.add_argument("--model", required=True)
    p.add_argument("--scale", choices=("link", "response"), default="response")
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = sub.add_parser("explain", parents=[common], help="decompose predictions")
    _add_data_options(p, response=False)
    p.add_argument("--model", required=True)
    p.add_argument("--rows", help="comma-separated row ids (with --id-column) or 1-based row numbers")
    p.add_argument("--id-column", dest="id_column", help="column holding row labels")
    p.add_argument("--digits", type=int, default=3)
    p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("importance", parents=[common], help="term and variable importances")
    p.add_argument("--model", required=True)
    p.add_argument("--standardized", action="store_true")
    p.add_argument("--response", help="response name (multivariate models; default: summed)")
    p.add_argument("--terms-out", dest="terms_out", help="term importance CSV (default: stdout)")
    p.add_argument("--variables-out", dest="variables_out", help="variable importance CSV (default: stdout)")
    p.add_argument("--svg", help="bar chart of variable importances")

    p = sub.add_parser("pd", parents=[common], help="partial dependence")
    _add_data_options(p, response=False)
    p.add_argument("--model", required=True)
    p.add_argument("--var", action="append", required=True, help="variable (give once or twice)")
    p.add_argument("--grid-points", dest="grid_points", type=int, default=20)
    p.add_argument("--exact-grid", dest="exact_grid", action="store_true",
                   help="use every distinct observed value")
    p.add_argument("--scale", choices=("link", "response"), default="response")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--svg", help="line plot (one variable) or heat map (two variables)")

    p = sub.add_parser("cv", parents=[common], help="repeated cross-validation")
    _add_data_options(p, response=True)
    _add_config_options(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--out", help="per-fold CSV (default: stdout)")
    p.add_argument("--summary", help="summary JSON (default: stderr)")
    return parser


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def resolve_config(args) -> FitConfig:
    """Config file settings overridden by any flag given on the command line."""
    settings = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                settings = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PreError(f"{args.config}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(settings, dict):
            raise PreError(f"{args.config}: config must be a JSON object")
    for name in _CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    if args.confirm is not None:
        settings["confirmatory"] = list(args.confirm)
    if args.seed is not None:
        settings["seed"] = args.seed
    settings["threads"] = args.threads or default_threads()
    if not settings.get("family"):
        settings["family"] = glm.GAUSSIAN
    known = {f.name for f in fields(FitConfig)}
    unknown = sorted(set(settings) - known)
    if unknown:
        raise PreError(f"unknown config key(s): {', '.join(unknown)}")
    return FitConfig(**settings)


def _drop(ds: DataSet, names) -> DataSet:
    if not names:
        return ds
    missing = [n for n in names if n not in ds.schema]
    if missing:
        raise PreError(f"--ignore: no column named {missing[0]!r}")
    keep = tuple(c for c in ds.columns if c.name not in names)
    return DataSet(keep, {c.name: ds.data[c.name] for c in keep}, ds.response_names)


def _load_training(args) -> DataSet:
    response = args.response or []
    if not response:
        raise PreError("--response is required")
    ds = load_csv(args.data, args.schema, response)
    return _drop(ds, args.ignore)


def _load_newdata(args, ens) -> DataSet:
    schema = dict(ens.schema)
    if args.schema:
        schema.update(read_schema(args.schema))
    ds = load_csv(args.data, schema, require_all=False)
    return _drop(ds, args.ignore)


def _emit(text: str, path: str | None, stream) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        stream.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit(args, out) -> None:
    config = resolve_config(args)
    ds = _load_training(args)
    ens = fit_pre(ds, config)
    save_model(ens, args.model)
    terms_path = args.terms or str(Path(args.model).with_suffix("")) + ".terms.csv"
    Path(terms_path).write_text(term_table(ens), encoding="utf-8")
    out.write(term_table(ens, digits=3))


def cmd_predict(args, out) -> None:
    ens = load_model(args.model)
    ds = _load_newdata(args, ens)
    pred = predict(ens, ds, args.scale).reshape(ds.n_rows, -1)
    names = list(ens.response_names) if len(ens.response_names) == pred.shape[1] else \
        [f"y{k + 1}" for k in range(pred.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"pred_{n}" for n in names] if pred.shape[1] > 1 else ["prediction"])
    for row in pred:
        w.writerow([repr(float(v)) for v in row])
    _emit(buf.getvalue(), args.out, out)


def _parse_rows(text: str, n: int) -> list[int]:
    rows = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            r = int(part)
        except ValueError:
            raise PreError(f"--rows: {part!r} is not a row number") from None
        if not 1 <= r <= n:
            raise PreError(f"--rows: row {r} is out of range 1..{n}")
        rows.append(r - 1)
    return rows


def cmd_explain(args, out) -> None:
    ens = load_model(args.model)
    ds = _load_newdata(args, ens)
    if args.id_column:
        if args.id_column not in ds.schema:
            raise PreError(f"--id-column: no column named {args.id_column!r}")
        ids_all = [str(v) if not isinstance(v, float) else f"{v:g}" for v in
                   (ds.labels(args.id_column) if ds.spec(args.id_column).kind == "categorical"
                    else ds.values(args.id_column))]
    else:
        ids_all = [str(i + 1) for i in range(ds.n_rows)]
    rows = list(range(ds.n_rows))
    if args.rows:
        wanted = [p.strip() for p in args.rows.split(",") if p.strip()]
        by_id = {v: i for i, v in enumerate(ids_all)}
        if args.id_column and all(w in by_id for w in wanted):
            # with an id column, --rows names rows by id
            rows = [by_id[w] for w in wanted]
        else:
            rows = _parse_rows(args.rows, ds.n_rows)
    exp = explain(ens, ds, rows, [ids_all[r] for r in rows])
    _emit(exp.format(args.digits), args.out, out)


def cmd_importance(args, out) -> None:
    ens = load_model(args.model)
    response = None
    if args.response is not None:
        if args.response not in ens.response_names:
            raise PreError(f"--response: model has no response {args.response!r}")
        response = ens.response_names.index(args.response)
    elif ens.n_responses == 1:
        response = 0
    terms = term_importance(ens, response, args.standardized)
    variables = variable_importance(ens, response, args.standardized)
    t_csv = importance_csv(terms, ["term", "description", "importance"])
    v_csv = importance_csv(variables, ["variable", "importance"])
    _emit(t_csv, args.terms_out, out)
    if not args.terms_out and not args.variables_out:
        out.write("\n")
    _emit(v_csv, args.variables_out, out)
    if args.svg:
        from .plots import importance_svg
        importance_svg(variables, args.svg, standardized=args.standardized)


def cmd_pd(args, out) -> None:
    ens = load_model(args.model)
    ds = _load_newdata(args, ens)
    if len(args.var) > 2:
        raise PreError("pd takes at most two --var options")
    points = None if args.exact_grid else args.grid_points
    pd = partial_dependence(ens, ds, args.var, scale=args.scale, max_points=points)
    _emit(pd.to_csv(ens.response_names), args.out, out)
    if args.svg:
        from .plots import pd_svg
        pd_svg(pd, args.svg, ylabel="prediction" if args.scale == "response" else "linear predictor")


def cmd_cv(args, out) -> None:
    config = resolve_config(args)
    ds = _load_training(args)
    report = repeated_cv(ds, config, k=args.folds, repeats=args.repeats, rng=config.seed)
    _emit(report.to_csv(), args.out, out)
    summary = json.dumps(report.summary(), indent=2) + "\n"
    if args.summary:
        Path(args.summary).write_text(summary, encoding="utf-8")
    else:
        sys.stderr.write(summary)


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "explain": cmd_explain,
            "importance": cmd_importance, "pd": cmd_pd, "cv": cmd_cv}


def run(argv=None, out=None) -> int:
    """Run the CLI; returns the process exit code."""
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise _UsageError("--threads must be at least 1")
        COMMANDS[args.command](args, out)
    except _UsageError as exc:
        print(f"prerules: usage error: {exc}", file=sys.stderr)
        return 2
    except (PreError, ValueError, KeyError, OSError) as exc:
        msg = str(exc.args[0]) if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"prerules: error: {' '.join(msg.split())}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
