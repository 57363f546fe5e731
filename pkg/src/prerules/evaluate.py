"""Predictive-performance metrics and repeated k-fold cross-validation."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from . import glm
from .dataset import DataSet, kfold_assignment
from .ensemble import FitConfig, fit_pre, predict
from .errors import DataError, FoldError, PreError
from .rulegen import response_matrix


def _pair(a, b, what: str):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0:
        raise ValueError(f"{what}: empty input")
    if a.shape != b.shape:
        raise ValueError(f"{what}: inputs have lengths {a.size} and {b.size}")
    return a, b


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative; ties count one half."""
    s, y = _pair(scores, labels, "auc")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("auc: labels must be 0/1")
    n1 = int(y.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("auc: labels contain a single class")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def brier(probs, labels) -> float:
    p, y = _pair(probs, labels, "brier")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("brier: probabilities must lie in [0, 1]")
    return float(np.mean((p - y) ** 2))


def mse(pred, obs) -> float:
    p, y = _pair(pred, obs, "mse")
    return float(np.mean((p - y) ** 2))


def r_squared(pred, obs) -> float:
    """``1 - SSE/SST``, with SST taken about the mean of ``obs``."""
    p, y = _pair(pred, obs, "r_squared")
    sst = np.sum((y - y.mean()) ** 2)
    if sst == 0:
        raise ValueError("r_squared: observed values have zero variance")
    return float(1.0 - np.sum((y - p) ** 2) / sst)


@dataclass(frozen=True)
class FoldRecord:
    repeat: int
    fold: int
    response: str
    loss: float
    effect: float  # AUC (binomial) or R^2 on the held-out fold; nan where undefined


@dataclass
class CvReport:
    family: str
    k: int
    repeats: int
    records: list[FoldRecord]
    response_names: tuple[str, ...]
    # per response: effect size on the pooled out-of-fold predictions, averaged over repeats
    effect: dict[str, float]

    @property
    def effect_name(self) -> str:
        return "auc" if self.family == glm.BINOMIAL else "r2"

    def losses(self, response: str | None = None) -> np.ndarray:
        response = response or self.response_names[0]
        return np.array([r.loss for r in self.records if r.response == response])

    def summary(self) -> dict[str, dict[str, float]]:
        """Per response: mean loss, SE = sd / sqrt(k * repeats) and the averaged effect size."""
        out = {}
        for name in self.response_names:
            loss = self.losses(name)
            out[name] = {"mean_loss": float(loss.mean()),
                         "se": float(loss.std(ddof=1) / math.sqrt(loss.size)) if loss.size > 1 else math.nan,
                         self.effect_name: self.effect[name]}
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["repeat", "fold", "response", "loss", self.effect_name])
        for r in self.records:
            w.writerow([r.repeat + 1, r.fold + 1, r.response, repr(r.loss), repr(r.effect)])
        return buf.getvalue()


def _effect(family: str, pred: np.ndarray, obs: np.ndarray) -> float:
    try:
        return auc(pred, obs) if family == glm.BINOMIAL else r_squared(pred, obs)
    except ValueError:
        return math.nan


def _loss(family: str, pred: np.ndarray, obs: np.ndarray) -> float:
    return brier(pred, obs) if family == glm.BINOMIAL else mse(pred, obs)


def repeated_cv(ds: DataSet, config: FitConfig = FitConfig(), k: int = 10, repeats: int = 10,
                rng=None, n_jobs: int = 1) -> CvReport:
    """Repeated k-fold cross-validation of the whole fitting pipeline.

    Each repeat draws a fresh partition (stratified by class for binomial
    responses). Losses are squared errors: on the probability scale for
    binomial responses, on the response scale otherwise.
    """
    Y = response_matrix(ds, config.family)
    n, q = Y.shape
    if k < 2 or n < k:
        raise DataError(f"need 2 <= k <= n for cross-validation (n={n}, k={k})")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    rng = np.random.default_rng(rng)
    partitions, fit_seeds = [], []
    for _ in range(repeats):
        strata = Y[:, 0] if config.family == glm.BINOMIAL else None
        partitions.append(kfold_assignment(n, k, rng, strata))
        fit_seeds.append([int(s) for s in rng.integers(2**63, size=k)])

    def run(job):
        rep, fold = job
        test = partitions[rep] == fold
        cfg = replace(config, seed=fit_seeds[rep][fold])
        try:
            ens = fit_pre(ds.take(np.flatnonzero(~test)), cfg)
            pred = predict(ens, ds.take(np.flatnonzero(test)), "response")
        except (PreError, ValueError, ArithmeticError) as exc:
            raise FoldError(rep, fold, exc) from exc
        return pred.reshape(-1, q)

    jobs = [(r, f) for r in range(repeats) for f in range(k)]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            preds = list(pool.map(run, jobs))
    else:
        preds = [run(job) for job in jobs]

    names = ds.response_names
    records = []
    oof = np.zeros((repeats, n, q))
    for (rep, fold), pred in zip(jobs, preds):
        test = partitions[rep] == fold
        oof[rep, test] = pred
        for j, name in enumerate(names):
            obs = Y[test, j]
            records.append(FoldRecord(rep, fold, name, _loss(config.family, pred[:, j], obs),
                                      _effect(config.family, pred[:, j], obs)))
    effect = {name: float(np.mean([_effect(config.family, oof[r, :, j], Y[:, j]) for r in range(repeats)]))
              for j, name in enumerate(names)}
    return CvReport(config.family, k, repeats, records, names, effect)
