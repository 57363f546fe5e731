"""Importance measures and partial dependence for fitted ensembles."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import CATEGORICAL, DataSet, format_number
from .ensemble import FittedEnsemble, Term, predict


def rule_sd(support) -> np.ndarray:
    """SD of a 0/1 term that equals 1 on a fraction ``support`` of the rows."""
    p = np.asarray(support, dtype=float)
    return np.sqrt(p * (1.0 - p))


def _response_sd(ens: FittedEnsemble, response: int) -> float:
    if len(ens.response_sd) <= response or not ens.response_sd[response] > 0:
        raise ValueError("standardized importances need the training SD of the response")
    return ens.response_sd[response]


def term_importance(ens: FittedEnsemble, response: int | None = 0,
                    standardized: bool = False) -> list[tuple[Term, float]]:
    """``|coef| * sd`` per selected term, in decreasing order of importance.

    With ``standardized`` the values are divided by the training SD of the
    response. ``response=None`` sums over responses (multivariate models).
    The intercept is excluded.
    """
    responses = range(ens.n_responses) if response is None else [response]
    out = []
    for term in ens.terms:
        imp = 0.0
        for k in responses:
            v = term.importance(k)
            imp += v / _response_sd(ens, k) if standardized else v
        out.append((term, float(imp)))
    # stable sort: ties keep fit order
    return sorted(out, key=lambda pair: -pair[1])


def variable_importance(ens: FittedEnsemble, response: int | None = 0,
                        standardized: bool = False) -> list[tuple[str, float]]:
    """Per-variable importance, in decreasing order; variables with zero importance are omitted.

    A linear term passes its importance to its variable. A rule's importance
    is divided by its number of conditions and each condition passes its
    share to the variable it tests.
    """
    totals: dict[str, float] = {}
    for term, imp in term_importance(ens, response, standardized):
        names = term.variables
        for name in names:
            totals[name] = totals.get(name, 0.0) + imp / len(names)
    order = {name: i for i, name in enumerate(ens.schema)}
    items = [(v, imp) for v, imp in totals.items() if imp > 0]
    return sorted(items, key=lambda pair: (-pair[1], order.get(pair[0], len(order))))


def importance_csv(rows: Sequence[tuple], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for name, imp in rows:
        label = name.name if isinstance(name, Term) else name
        desc = [name.description] if isinstance(name, Term) else []
        w.writerow([label, *desc, repr(float(imp))])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# partial dependence
# ---------------------------------------------------------------------------


@dataclass
class PartialDependence:
    variables: tuple[str, ...]
    grid: list[tuple]  # one tuple of values per grid point
    values: np.ndarray  # (n_points, q)

    def to_csv(self, response_names: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        q = self.values.shape[1]
        names = list(response_names) if len(response_names) == q else [f"y{k + 1}" for k in range(q)]
        w.writerow([*self.variables, *(["pd"] if q == 1 else [f"pd_{r}" for r in names])])
        for point, vals in zip(self.grid, self.values):
            cells = [format_number(v) if isinstance(v, float) else v for v in point]
            w.writerow([*cells, *(repr(float(v)) for v in vals)])
        return buf.getvalue()


def default_grid(ds: DataSet, variable: str, max_points: int | None = 20) -> list:
    """Grid for one variable: all levels, or distinct values thinned to quantile-spaced points."""
    spec = ds.spec(variable)
    if spec.kind == CATEGORICAL:
        return list(spec.levels)
    values = np.unique(ds.values(variable))
    if max_points is None or values.size <= max_points:
        return [float(v) for v in values]
    qs = np.quantile(ds.values(variable), np.linspace(0.0, 1.0, max_points), method="inverted_cdf")
    return [float(v) for v in np.unique(qs)]


def partial_dependence(ens: FittedEnsemble, ds: DataSet, variables: str | Sequence[str],
                       grid: Sequence | Sequence[Sequence] | None = None, scale: str = "response",
                       max_points: int | None = 20) -> PartialDependence:
    """Average prediction with ``variables`` fixed at each grid point in every row of ``ds``.

    For two variables the grid is the cross product of the per-variable grids,
    with the first variable varying slowest.
    """
    if isinstance(variables, str):
        variables = (variables,)
    variables = tuple(variables)
    if not 1 <= len(variables) <= 2:
        raise ValueError("partial dependence takes one or two variables")
    for v in variables:
        if v not in ds.schema:
            raise KeyError(f"unknown variable {v!r}")
    if grid is None:
        axes = [default_grid(ds, v, max_points) for v in variables]
    elif len(variables) == 1:
        axes = [list(grid)]
    else:
        axes = [list(g) for g in grid]
    points = list(itertools.product(*axes))
    values = []
    for point in points:
        mod = ds
        for v, g in zip(variables, point):
            mod = mod.with_values(v, g)
        pred = predict(ens, mod, scale)
        values.append(np.atleast_1d(pred.mean(axis=0)))
    return PartialDependence(variables, points, np.array(values))
