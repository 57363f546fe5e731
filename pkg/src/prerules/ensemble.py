"""Fitting, predicting with, explaining and storing prediction rule ensembles."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import glm
from .dataset import CATEGORICAL, NUMERIC, ColumnSpec, DataSet, WinsorCutpoints, format_number, winsorize
from .errors import DataError, ModelFormatError, RuleSyntaxError, UnseenLevelError
from .glm import CvCurve, PenaltySpec
from .rulegen import BoostConfig, Rule, RuleSet, generate_rules, parse_rule, response_matrix
from .tree import TreeConfig

FORMAT_NAME = "prerules-model"
FORMAT_VERSION = 1

RULES = "rules"
RULE = "rule"
LINEAR = "linear"
BOTH = "both"
CONSTRAINTS = ("none", "nonneg", "nonpos")


@dataclass(frozen=True)
class FitConfig:
    """Every setting of the fitting pipeline, flat so it maps onto a JSON config file."""

    family: str = glm.GAUSSIAN
    type: str = BOTH
    # rule generation
    ntrees: int = 500
    learnrate: float = 0.01
    sampfrac: float = 0.5
    maxdepth: int = 3
    minsplit: int = 20
    minbucket: int = 7
    alpha: float = 0.05
    algorithm: str = "unbiased"
    mtry: int | None = None
    # linear terms
    winsor_lower: float = 0.05
    winsor_upper: float = 0.95
    linear_sd: float = 0.4
    # penalized fit
    n_lambda: int = 100
    lambda_min_ratio: float | None = None
    nfolds: int = 10
    select: str = "1se"
    cv_loss: str | None = None
    lam: float | None = None
    confirmatory: tuple[str, ...] = ()
    constraint: str = "none"
    seed: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.family not in glm.FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.type not in (RULES, LINEAR, BOTH):
            raise ValueError(f"type must be one of rules, linear, both; got {self.type!r}")
        if self.constraint not in CONSTRAINTS:
            raise ValueError(f"constraint must be one of {', '.join(CONSTRAINTS)}")
        if self.select not in ("1se", "min"):
            raise ValueError("select must be '1se' or 'min'")
        if self.linear_sd <= 0:
            raise ValueError("linear_sd must be positive")
        if self.lam is not None and self.lam <= 0:
            raise ValueError("a fixed lambda must be positive")
        object.__setattr__(self, "confirmatory", tuple(self.confirmatory))
        self.boost  # validates the rule-generation settings

    @property
    def boost(self) -> BoostConfig:
        tree = TreeConfig(self.maxdepth, self.minsplit, self.minbucket, self.alpha, self.algorithm, self.mtry)
        return BoostConfig(self.ntrees, self.learnrate, self.sampfrac, tree)

    def bounds(self) -> tuple[float, float]:
        return {"none": (-np.inf, np.inf), "nonneg": (0.0, np.inf), "nonpos": (-np.inf, 0.0)}[self.constraint]

    def to_json(self) -> dict:
        out = asdict(self)
        out["confirmatory"] = list(self.confirmatory)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "FitConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**obj)


@dataclass(frozen=True)
class Term:
    """A rule or linear term with coefficients on the original variable scale.

    ``sd`` is the training SD of the coded term (for rules ``sqrt(p(1-p))``
    with ``p`` the support); it may be ``None`` for hand-built models.
    ``scale`` is the factor applied to the winsorized variable before fitting.
    """

    kind: str
    name: str
    coef: tuple[float, ...]
    rule: Rule | None = None
    winsor: WinsorCutpoints | None = None
    scale: float = 1.0
    sd: float | None = None
    support: float | None = None
    confirmatory: bool = False

    @property
    def description(self) -> str:
        return str(self.rule) if self.kind == RULE else self.winsor.describe()

    @property
    def variables(self) -> list[str]:
        """One entry per condition for rules, the single variable for linear terms."""
        return self.rule.variables if self.kind == RULE else [self.winsor.variable]

    def code(self, ds: DataSet) -> np.ndarray:
        """The term's values on ``ds``: 0/1 for rules, the winsorized variable for linear terms."""
        if self.kind == RULE:
            return self.rule.evaluate(ds).astype(float)
        return self.winsor.apply(ds.values(self.winsor.variable))

    def importance(self, response: int = 0) -> float:
        if self.sd is None:
            return math.nan
        return abs(self.coef[response]) * self.sd

    def to_json(self) -> dict:
        out = {"kind": self.kind, "name": self.name, "coef": list(self.coef), "sd": self.sd,
               "support": self.support, "confirmatory": self.confirmatory}
        if self.kind == RULE:
            out["rule"] = self.rule.to_json()
        else:
            w = self.winsor
            out["winsor"] = {"variable": w.variable, "lower": w.lower, "upper": w.upper,
                             "lower_pct": w.lower_pct, "upper_pct": w.upper_pct}
            out["scale"] = self.scale
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Term":
        kind = obj["kind"]
        if kind == RULE:
            rule = Rule.from_json(obj["rule"])
            return cls(RULE, obj["name"], tuple(float(c) for c in obj["coef"]), rule=rule, sd=obj.get("sd"),
                       support=obj.get("support"), confirmatory=bool(obj.get("confirmatory", False)))
        if kind == LINEAR:
            w = obj["winsor"]
            cut = WinsorCutpoints(w["variable"], float(w["lower"]), float(w["upper"]),
                                  float(w.get("lower_pct", 0.05)), float(w.get("upper_pct", 0.95)))
            return cls(LINEAR, obj["name"], tuple(float(c) for c in obj["coef"]), winsor=cut,
                       scale=float(obj.get("scale", 1.0)), sd=obj.get("sd"),
                       confirmatory=bool(obj.get("confirmatory", False)))
        raise ModelFormatError(f"unknown term kind {kind!r}")


@dataclass
class DesignMatrix:
    """Fitting matrix plus the metadata needed to turn columns back into terms.

    Column ``j`` is ``terms[j].code(ds) * terms[j].scale``; the ``coef`` of the
    template terms is empty.
    """

    X: np.ndarray
    terms: list[Term]
    penalty_factor: np.ndarray

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.terms]


@dataclass
class FittedEnsemble:
    family: str
    response_names: tuple[str, ...]
    intercept: tuple[float, ...]
    terms: list[Term]
    schema: dict[str, ColumnSpec]
    config: FitConfig = field(default_factory=FitConfig)
    n_train: int = 0
    response_sd: tuple[float, ...] = ()
    lam: float | None = None
    cv: CvCurve | None = None
    n_rules_generated: int = 0
    n_candidates: int = 0

    @property
    def n_responses(self) -> int:
        return len(self.intercept)

    @property
    def rules(self) -> list[Term]:
        return [t for t in self.terms if t.kind == RULE]

    @property
    def variables(self) -> list[str]:
        """Variables used by the selected terms, in schema order."""
        used = {v for t in self.terms for v in t.variables}
        return [name for name in self.schema if name in used]


# ---------------------------------------------------------------------------
# design matrix
# ---------------------------------------------------------------------------


def _sample_sd(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def _resolve_confirmatory(ds: DataSet, entries: Sequence[str]) -> tuple[list[Rule], list[str]]:
    """Split confirmatory entries into rules and names of numeric predictors (linear terms)."""
    rules, linear = [], []
    predictors = set(ds.predictor_names)
    for text in entries:
        text = text.strip()
        if text in predictors:
            if ds.spec(text).kind != NUMERIC:
                raise DataError(f"confirmatory variable {text!r} is categorical; give it as a rule, "
                                f"e.g. \"{text} in {{{ds.spec(text).levels[0]}}}\"")
            linear.append(text)
            continue
        try:
            rule = parse_rule(text, text)
        except RuleSyntaxError:
            raise DataError(f"confirmatory term {text!r} is neither a predictor nor a rule") from None
        for cond in rule.conditions:
            if cond.variable not in predictors:
                raise DataError(f"confirmatory rule {text!r} uses unknown predictor {cond.variable!r}")
        rules.append(rule)
    return rules, linear


def _rule_term(rule: Rule, ind: np.ndarray, confirmatory: bool = False) -> Term:
    p = float(ind.mean())
    return Term(RULE, rule.id or str(rule), (), rule=rule, sd=math.sqrt(p * (1 - p)), support=p,
                confirmatory=confirmatory)


def build_design_matrix(ds: DataSet, rules: RuleSet | Sequence[Rule], config: FitConfig = FitConfig(),
                        confirmatory_rules: Sequence[Rule] = (),
                        confirmatory_linear: Sequence[str] = ()) -> DesignMatrix:
    """Assemble confirmatory rules, rules and (optionally) linear terms into one matrix.

    Rule columns are 0/1. Each numeric predictor becomes a linear column when
    ``config.type`` includes linear terms: winsorized at the configured
    quantiles and multiplied by ``linear_sd / sd`` so its sample SD equals
    ``linear_sd``. Categorical predictors enter through rules only.
    """
    cols, terms, pf = [], [], []
    for rule in confirmatory_rules:
        ind = rule.evaluate(ds)
        cols.append(ind.astype(float))
        terms.append(_rule_term(rule, ind, confirmatory=True))
        pf.append(0.0)
    if isinstance(rules, RuleSet) and rules.indicators is not None:
        indicators = list(rules.indicators.T)
    else:
        indicators = [r.evaluate(ds) for r in rules]
    for rule, ind in zip(rules, indicators):
        cols.append(ind.astype(float))
        terms.append(_rule_term(rule, ind))
        pf.append(1.0)
    names = [n for n in ds.predictor_names if ds.spec(n).kind == NUMERIC]
    if config.type == RULES:
        names = [n for n in names if n in confirmatory_linear]
    for name in names:
        confirm = name in confirmatory_linear
        x, cut = winsorize(ds.values(name), config.winsor_lower, config.winsor_upper, name)
        sd = _sample_sd(x)
        if not sd > 0:
            if confirm:
                raise DataError(f"confirmatory variable {name!r} is constant after winsorizing")
            warnings.warn(f"linear term {name!r} has zero variance after winsorizing; dropped", stacklevel=2)
            continue
        scale = config.linear_sd / sd
        cols.append(x * scale)
        terms.append(Term(LINEAR, name, (), winsor=cut, scale=scale, sd=sd, confirmatory=confirm))
        pf.append(0.0 if confirm else 1.0)
    X = np.column_stack(cols) if cols else np.zeros((ds.n_rows, 0))
    return DesignMatrix(X, terms, np.asarray(pf, dtype=float))


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def fit_pre(ds: DataSet, config: FitConfig = FitConfig()) -> FittedEnsemble:
    """Generate rules, build the design, select lambda by CV and keep the nonzero terms.

    A fit whose selected model has no terms besides the intercept is a valid
    result. With ``config.lam`` set, cross-validation is skipped and the model
    is fitted at that lambda.
    """
    rng = np.random.default_rng(config.seed)
    rule_seed, cv_seed = (int(s) for s in rng.integers(2**63, size=2))
    Y = response_matrix(ds, config.family)
    conf_rules, conf_linear = _resolve_confirmatory(ds, config.confirmatory)
    reserved = [r.evaluate(ds) for r in conf_rules]
    if config.type == LINEAR:
        ruleset = RuleSet([], [], np.zeros(0), np.zeros((ds.n_rows, 0), dtype=bool), 0)
    else:
        # complements are not interchangeable once coefficients are sign-constrained
        ruleset = generate_rules(ds, config.family, config.boost, rule_seed,
                                 drop_complements=config.constraint == "none",
                                 reserved=reserved, n_jobs=config.threads)
    design = build_design_matrix(ds, ruleset, config, conf_rules, conf_linear)
    lower, upper = config.bounds()
    q = Y.shape[1]
    response_sd = tuple(_sample_sd(Y[:, k]) for k in range(q))
    common = dict(config=config, n_train=ds.n_rows, response_sd=response_sd,
                  n_rules_generated=ruleset.n_generated, n_candidates=len(ruleset))
    if design.X.shape[1] == 0:
        b0 = _null_intercept(config.family, Y)
        return FittedEnsemble(config.family, tuple(ds.response_names), b0, [], ds.schema, **common)
    spec = PenaltySpec(n_lambda=config.n_lambda, lambda_min_ratio=config.lambda_min_ratio,
                       penalty_factor=design.penalty_factor, lower=lower, upper=upper)
    y_fit = Y if config.family == glm.MGAUSSIAN else Y[:, 0]
    if config.lam is not None:
        b0, coef, _ = glm.fit_to_lambda(design.X, y_fit, config.lam, config.family, spec)
        lam, curve = config.lam, None
    else:
        res = glm.cv_select(design.X, y_fit, config.family, spec, k=config.nfolds, rule=config.select,
                            rng=cv_seed, loss=config.cv_loss, n_jobs=config.threads)
        b0, coef, lam, curve = res.intercept, res.coef, res.lam, res.curve
    terms = []
    for j, tmpl in enumerate(design.terms):
        if np.all(coef[j] == 0):
            continue
        # the fitted column was code * scale, so the coefficient of the code is beta * scale
        orig = tuple(float(c * tmpl.scale) for c in coef[j])
        terms.append(Term(tmpl.kind, tmpl.name, orig, tmpl.rule, tmpl.winsor, tmpl.scale, tmpl.sd,
                          tmpl.support, tmpl.confirmatory))
    return FittedEnsemble(config.family, tuple(ds.response_names), tuple(float(b) for b in b0), terms,
                          ds.schema, lam=float(lam), cv=curve, **common)


def _null_intercept(family: str, Y: np.ndarray) -> tuple[float, ...]:
    mean = Y.mean(axis=0)
    if family == glm.BINOMIAL:
        return tuple(float(v) for v in np.log(mean / (1 - mean)))
    if family == glm.POISSON:
        return tuple(float(v) for v in np.log(mean))
    return tuple(float(v) for v in mean)


# ---------------------------------------------------------------------------
# prediction and explanation
# ---------------------------------------------------------------------------


def check_conformance(ens: FittedEnsemble, ds: DataSet) -> None:
    """Raise if ``ds`` lacks a variable the ensemble uses or holds an unknown level."""
    for name in ens.variables:
        if name not in ds.schema:
            raise DataError(f"new data lacks column {name!r} used by the model")
        spec, want = ds.spec(name), ens.schema[name]
        if spec.kind != want.kind:
            raise DataError(f"column {name!r} is {spec.kind} in the new data but {want.kind} in the model")
        if spec.kind == CATEGORICAL:
            known = set(want.levels)
            present = np.unique(ds.values(name))
            for code in present:
                if spec.levels[int(code)] not in known:
                    raise UnseenLevelError(name, spec.levels[int(code)])


def coded_terms(ens: FittedEnsemble, ds: DataSet) -> np.ndarray:
    """(n, n_terms) matrix of term codings: 0/1 rules and winsorized linear terms."""
    check_conformance(ens, ds)
    if not ens.terms:
        return np.zeros((ds.n_rows, 0))
    return np.column_stack([t.code(ds) for t in ens.terms])


def _contributions(ens: FittedEnsemble, coded: np.ndarray):
    coef = np.array([t.coef for t in ens.terms], dtype=float).reshape(len(ens.terms), ens.n_responses)
    # adding 0.0 turns the -0.0 of unmatched negative-coefficient rules into 0.0
    contrib = coded[:, :, None] * coef[None, :, :] + 0.0
    intercept = np.asarray(ens.intercept, dtype=float)
    link = intercept + contrib.sum(axis=1)
    return contrib, link


def predict(ens: FittedEnsemble, ds: DataSet, scale: str = "response") -> np.ndarray:
    """Predictions of shape (n,) for one response, (n, q) for several."""
    if scale not in ("link", "response"):
        raise ValueError("scale must be 'link' or 'response'")
    _, link = _contributions(ens, coded_terms(ens, ds))
    out = link if scale == "link" else glm.inverse_link(ens.family, link)
    return out[:, 0] if ens.n_responses == 1 else out


@dataclass
class Explanation:
    """Per-row decomposition of predictions into term contributions.

    ``contributions`` has shape (n, 1 + n_terms, q); its first column is the
    intercept. ``link`` equals the row sums of ``contributions``.
    """

    row_ids: list[str]
    variables: list[str]
    values: list[list[str]]
    term_names: list[str]
    rule_names: list[str]
    codings: np.ndarray
    contributions: np.ndarray
    link: np.ndarray
    response: np.ndarray
    response_names: tuple[str, ...]

    def panel_csv(self, panel: str, response: int = 0, digits: int | None = None) -> str:
        """One of the three panels as CSV text: ``values``, ``rules`` or ``contributions``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        fmt = (lambda v: f"{v:.{digits}f}") if digits is not None else (lambda v: repr(float(v)))
        if panel == "values":
            w.writerow(["row", *self.variables])
            for rid, vals in zip(self.row_ids, self.values):
                w.writerow([rid, *vals])
        elif panel == "rules":
            w.writerow(["row", *self.rule_names])
            for rid, codes in zip(self.row_ids, self.codings):
                w.writerow([rid, *(int(c) for c in codes)])
        elif panel == "contributions":
            pred = "prediction"
            w.writerow(["row", "(Intercept)", *self.term_names, "sum", pred])
            for i, rid in enumerate(self.row_ids):
                w.writerow([rid, *(fmt(v) for v in self.contributions[i, :, response]),
                            fmt(self.link[i, response]), fmt(self.response[i, response])])
        else:
            raise ValueError(f"unknown panel {panel!r}")
        return buf.getvalue()

    def format(self, digits: int = 3) -> str:
        parts = ["(a) variable values", self.panel_csv("values"), "(b) rules", self.panel_csv("rules")]
        for k, name in enumerate(self.response_names or ("response",)):
            title = "(c) contributions" + (f" to {name}" if len(self.response_names) > 1 else "")
            parts += [title, self.panel_csv("contributions", k, digits)]
        return "\n".join(parts)


def explain(ens: FittedEnsemble, ds: DataSet, rows: Sequence[int] | None = None,
            row_ids: Sequence[str] | None = None) -> Explanation:
    """Decompose the predictions for ``rows`` of ``ds`` (all rows by default)."""
    if rows is not None:
        ds = ds.take(rows)
    if row_ids is None:
        row_ids = [str(r + 1) for r in (rows if rows is not None else range(ds.n_rows))]
    coded = coded_terms(ens, ds)
    contrib, link = _contributions(ens, coded)
    intercept = np.broadcast_to(np.asarray(ens.intercept, dtype=float), (ds.n_rows, 1, ens.n_responses))
    full = np.concatenate([intercept, contrib], axis=1)
    variables = ens.variables
    values = [[_show(ds, v, i) for v in variables] for i in range(ds.n_rows)]
    rule_idx = [j for j, t in enumerate(ens.terms) if t.kind == RULE]
    return Explanation(list(row_ids), variables, values, [t.name for t in ens.terms],
                       [ens.terms[j].name for j in rule_idx], coded[:, rule_idx].astype(np.int64),
                       full, link, glm.inverse_link(ens.family, link), ens.response_names)


def _show(ds: DataSet, name: str, i: int) -> str:
    v = ds.row(i)[name]
    return format_number(v) if isinstance(v, float) else v


# ---------------------------------------------------------------------------
# term tables
# ---------------------------------------------------------------------------


def term_table(ens: FittedEnsemble, digits: int | None = None) -> str:
    """CSV of the selected terms: name, coefficient(s), description, SD, importance."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    q = ens.n_responses
    resp = ens.response_names if len(ens.response_names) == q else tuple(f"y{k + 1}" for k in range(q))
    coef_cols = ["coefficient"] if q == 1 else [f"coefficient_{r}" for r in resp]
    imp_cols = ["importance"] if q == 1 else [f"importance_{r}" for r in resp]
    fmt = (lambda v: f"{v:.{digits}f}") if digits is not None else (lambda v: repr(float(v)))
    w.writerow(["term", *coef_cols, "description", "sd", *imp_cols])
    w.writerow(["(Intercept)", *(fmt(b) for b in ens.intercept), "1", "", *([""] * q)])
    for t in ens.terms:
        sd = "" if t.sd is None else fmt(t.sd)
        imps = ["" if t.sd is None else fmt(t.importance(k)) for k in range(q)]
        w.writerow([t.name, *(fmt(c) for c in t.coef), t.description, sd, *imps])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def to_json(ens: FittedEnsemble) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "family": ens.family,
        "response_names": list(ens.response_names),
        "intercept": list(ens.intercept),
        "terms": [t.to_json() for t in ens.terms],
        "schema": {name: spec.to_json() for name, spec in ens.schema.items()},
        "config": ens.config.to_json(),
        "training": {"n": ens.n_train, "response_sd": list(ens.response_sd),
                     "rules_generated": ens.n_rules_generated, "candidates": ens.n_candidates},
        "lambda": ens.lam,
        "cv": ens.cv.to_json() if ens.cv is not None else None,
    }


def from_json(obj) -> FittedEnsemble:
    if not isinstance(obj, dict) or obj.get("format") != FORMAT_NAME:
        raise ModelFormatError("not a prerules model file")
    if obj.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"model format version {obj.get('version')!r} is not supported "
                               f"(expected {FORMAT_VERSION})")
    try:
        schema = {name: ColumnSpec.from_json(name, spec) for name, spec in obj["schema"].items()}
        training = obj.get("training", {})
        ens = FittedEnsemble(
            family=obj["family"],
            response_names=tuple(obj["response_names"]),
            intercept=tuple(float(b) for b in obj["intercept"]),
            terms=[Term.from_json(t) for t in obj["terms"]],
            schema=schema,
            config=FitConfig.from_json(obj["config"]) if obj.get("config") else FitConfig(obj["family"]),
            n_train=int(training.get("n", 0)),
            response_sd=tuple(float(s) for s in training.get("response_sd", ())),
            lam=obj.get("lambda"),
            cv=CvCurve.from_json(obj["cv"]) if obj.get("cv") else None,
            n_rules_generated=int(training.get("rules_generated", 0)),
            n_candidates=int(training.get("candidates", 0)),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"corrupted model file: {exc}") from None
    if ens.family not in glm.FAMILIES:
        raise ModelFormatError(f"unknown family {ens.family!r}")
    for t in ens.terms:
        if len(t.coef) != ens.n_responses:
            raise ModelFormatError(f"term {t.name!r} has {len(t.coef)} coefficients, expected {ens.n_responses}")
        unknown = [v for v in t.variables if v not in schema]
        if unknown:
            raise ModelFormatError(f"term {t.name!r} uses variables missing from the schema: {', '.join(unknown)}")
    return ens


def serialize(ens: FittedEnsemble) -> str:
    return json.dumps(to_json(ens), indent=2) + "\n"


def deserialize(text: str) -> FittedEnsemble:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return from_json(obj)


def save_model(ens: FittedEnsemble, path) -> None:
    Path(path).write_text(serialize(ens), encoding="utf-8")


def load_model(path) -> FittedEnsemble:
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"{path}: no such model file")
    try:
        return deserialize(path.read_text(encoding="utf-8"))
    except ModelFormatError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
