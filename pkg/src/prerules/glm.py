"""Lasso-penalized GLMs fitted by pathwise coordinate descent.

Objectives, with ``n`` observations and penalty factors ``pf``::

    gaussian   (1/2n) sum (y - b0 - x'b)^2              + lam * sum pf_j |b_j|
    binomial   -(1/n) loglik(logistic(b0 + x'b); y)      + lam * sum pf_j |b_j|
    poisson    -(1/n) loglik(exp(b0 + x'b); y)           + lam * sum pf_j |b_j|
    mgaussian  (1/2n) ||Y - 1 b0' - X B||_F^2            + lam * sum pf_j ||B_j||_2

Every coefficient is kept inside its box ``[lower_j, upper_j]`` (which must
contain 0). Intercepts are never penalized or constrained. Columns are used as
given: there is no internal standardization.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dataset import kfold_assignment
from .errors import ConvergenceError, DataError

GAUSSIAN = "gaussian"
BINOMIAL = "binomial"
POISSON = "poisson"
MGAUSSIAN = "mgaussian"
FAMILIES = (GAUSSIAN, BINOMIAL, POISSON, MGAUSSIAN)

WEIGHT_FLOOR = 1e-5
ETA_CAP = 30.0
MAX_IRLS = 100
_HUGE = 1e250


class SeparationWarning(UserWarning):
    """The binomial linear predictor grew past ``ETA_CAP``: the classes are (nearly) separable."""


def logistic(eta):
    eta = np.asarray(eta, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * eta))


def inverse_link(family: str, eta):
    if family == BINOMIAL:
        return logistic(eta)
    if family == POISSON:
        return np.exp(eta)
    return np.asarray(eta, dtype=float)


def soft_threshold(z, gamma):
    """``sign(z) * max(|z| - gamma, 0)``."""
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("threshold must be non-negative")
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


def check_response(Y: np.ndarray, family: str) -> None:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    if not np.all(np.isfinite(Y)):
        raise DataError("response contains non-finite values")
    if family == BINOMIAL and not np.all((Y == 0) | (Y == 1)):
        raise DataError("binomial response must be coded 0/1")
    if family == POISSON:
        if np.any(Y < 0) or np.any(Y != np.round(Y)):
            raise DataError("poisson response must be non-negative integers")
        if not np.any(Y > 0):
            raise DataError("poisson response is identically zero")
    if family == BINOMIAL and (Y.min() == Y.max()):
        raise DataError("binomial response has a single class")


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _cd_kernel(X, r, w, beta, work, xbar, vc, thr, lower, upper, tol, max_sweeps):
    """Cyclic coordinate descent over the columns in ``work``.

    Each coordinate step jointly re-minimizes over the intercept, which is the
    same as working with weighted-centered columns. ``r`` is the weighted
    residual vector with ``sum(w * r) == 0`` on entry; it is updated in place,
    as is ``beta``. Returns (intercept shift, sweeps, converged).
    """
    n = X.shape[0]
    shift = 0.0
    for sweep in range(max_sweeps):
        dmax = 0.0
        for jj in range(work.shape[0]):
            j = work[jj]
            if vc[j] <= 0.0:
                continue
            bj = beta[j]
            g = 0.0
            for i in range(n):
                g += w[i] * X[i, j] * r[i]
            u = g + vc[j] * bj
            t = 0.0
            if u > thr[j]:
                t = (u - thr[j]) / vc[j]
            elif u < -thr[j]:
                t = (u + thr[j]) / vc[j]
            if t < lower[j]:
                t = lower[j]
            elif t > upper[j]:
                t = upper[j]
            d = t - bj
            if d != 0.0:
                m = xbar[j]
                for i in range(n):
                    r[i] -= d * (X[i, j] - m)
                shift -= d * m
                beta[j] = t
                if abs(d) > dmax:
                    dmax = abs(d)
        if dmax < tol:
            return shift, sweep + 1, True
    return shift, max_sweeps, False


@njit(cache=True, nogil=True)
def _cov_kernel(G, g, beta, thr, lower, upper, tol, max_sweeps):
    """Coordinate descent with covariance updates on a working set.

    ``G`` is the weighted, centered Gram matrix of the working columns and ``g``
    their current gradient ``X'W r``; both are in working-set coordinates.
    A coordinate move ``d`` updates the gradient by ``-d * G[:, j]``.
    Returns (sweeps, converged).
    """
    m = beta.shape[0]
    for sweep in range(max_sweeps):
        dmax = 0.0
        for j in range(m):
            v = G[j, j]
            if v <= 0.0:
                continue
            bj = beta[j]
            u = g[j] + v * bj
            t = 0.0
            if u > thr[j]:
                t = (u - thr[j]) / v
            elif u < -thr[j]:
                t = (u + thr[j]) / v
            if t < lower[j]:
                t = lower[j]
            elif t > upper[j]:
                t = upper[j]
            d = t - bj
            if d != 0.0:
                beta[j] = t
                for k in range(m):
                    g[k] -= d * G[k, j]
                if abs(d) > dmax:
                    dmax = abs(d)
        if dmax < tol:
            return sweep + 1, True
    return max_sweeps, False


@njit(cache=True, nogil=True)
def _group_cd_kernel(X, R, w, B, work, xbar, vc, thr, lower, upper, tol, max_sweeps):
    """Grouped coordinate descent: each column's row of ``B`` moves as a block."""
    n, q = R.shape
    shift = np.zeros(q)
    z = np.zeros(q)
    c = np.zeros(q)
    for sweep in range(max_sweeps):
        dmax = 0.0
        for jj in range(work.shape[0]):
            j = work[jj]
            if vc[j] <= 0.0:
                continue
            for k in range(q):
                z[k] = 0.0
            for i in range(n):
                wx = w[i] * X[i, j]
                for k in range(q):
                    z[k] += wx * R[i, k]
            norm = 0.0
            for k in range(q):
                ck = (z[k] + vc[j] * B[j, k]) / vc[j]
                if ck < lower[j]:
                    ck = lower[j]
                elif ck > upper[j]:
                    ck = upper[j]
                c[k] = ck
                norm += ck * ck
            norm = math.sqrt(norm)
            scale = 0.0
            if norm > 0.0:
                scale = 1.0 - thr[j] / (vc[j] * norm)
                if scale < 0.0:
                    scale = 0.0
            m = xbar[j]
            for k in range(q):
                d = scale * c[k] - B[j, k]
                if d != 0.0:
                    for i in range(n):
                        R[i, k] -= d * (X[i, j] - m)
                    shift[k] -= d * m
                    B[j, k] += d
                    if abs(d) > dmax:
                        dmax = abs(d)
        if dmax < tol:
            return shift, sweep + 1, True
    return shift, max_sweeps, False


def group_prox(z, v: float, lam: float, lower=-np.inf, upper=np.inf) -> np.ndarray:
    """Minimizer of ``(v/2)||b - z/v||^2 + lam*||b||`` over the sign box.

    The box must be an orthant-type box (bounds 0 or infinite), for which the
    solution is the group shrinkage of the box projection of ``z / v``.
    """
    c = np.clip(np.asarray(z, dtype=float) / v, lower, upper)
    norm = np.linalg.norm(c)
    if norm == 0:
        return np.zeros_like(c)
    return max(0.0, 1.0 - lam / (v * norm)) * c


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


@dataclass
class PenaltySpec:
    """Penalty settings.

    ``lower``/``upper`` are per-column bounds (scalars broadcast); a
    ``penalty_factor`` of 0 leaves a column unpenalized.
    """

    lambdas: np.ndarray | None = None
    n_lambda: int = 100
    lambda_min_ratio: float | None = None
    penalty_factor: np.ndarray | None = None
    lower: np.ndarray | float = -np.inf
    upper: np.ndarray | float = np.inf
    tol: float = 1e-7
    max_sweeps: int = 100_000
    # stop a generated grid once the fit saturates (see ``_Problem.path``)
    early_stop: bool = True

    def resolved(self, p: int):
        pf = np.ones(p) if self.penalty_factor is None else np.asarray(self.penalty_factor, dtype=float)
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (p,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (p,)).copy()
        if pf.shape != (p,):
            raise ValueError(f"penalty_factor has length {pf.size}, expected {p}")
        if np.any(pf < 0):
            raise ValueError("penalty factors must be non-negative")
        if np.any(lower > 0) or np.any(upper < 0):
            raise ValueError("coefficient boxes must contain 0")
        if self.lambdas is not None:
            lam = np.asarray(self.lambdas, dtype=float)
            if lam.ndim != 1 or lam.size == 0 or np.any(lam <= 0) or np.any(np.diff(lam) >= 0):
                raise ValueError("lambda grid must be positive and strictly decreasing")
        return pf, lower, upper


@dataclass
class LassoPath:
    family: str
    lambdas: np.ndarray
    intercepts: np.ndarray  # (L, q)
    coefs: np.ndarray  # (L, p, q)
    sweeps: np.ndarray = field(default=None, repr=False)
    separated: np.ndarray = field(default=None, repr=False)

    @property
    def nonzero(self) -> np.ndarray:
        return np.any(self.coefs != 0, axis=2).sum(axis=1)

    def link(self, X, index=None) -> np.ndarray:
        """Linear predictor, shape (L, n, q), or (n, q) for a single ``index``."""
        X = np.asarray(X, dtype=float)
        if index is not None:
            return self.intercepts[index] + X @ self.coefs[index]
        return self.intercepts[:, None, :] + np.einsum("ij,ljk->lik", X, self.coefs)


@dataclass
class CvCurve:
    lambdas: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    fold_errors: np.ndarray  # (k, L)
    index_min: int
    index_1se: int
    loss: str

    @property
    def lambda_min(self) -> float:
        return float(self.lambdas[self.index_min])

    @property
    def lambda_1se(self) -> float:
        return float(self.lambdas[self.index_1se])

    def to_json(self) -> dict:
        return {"lambdas": self.lambdas.tolist(), "mean": self.mean.tolist(), "se": self.se.tolist(),
                "fold_errors": self.fold_errors.tolist(), "index_min": self.index_min,
                "index_1se": self.index_1se, "loss": self.loss}

    @classmethod
    def from_json(cls, obj: dict) -> "CvCurve":
        return cls(np.array(obj["lambdas"], dtype=float), np.array(obj["mean"], dtype=float),
                   np.array(obj["se"], dtype=float), np.array(obj["fold_errors"], dtype=float),
                   int(obj["index_min"]), int(obj["index_1se"]), obj["loss"])


@dataclass
class CvResult:
    curve: CvCurve
    index: int
    lam: float
    intercept: np.ndarray  # (q,)
    coef: np.ndarray  # (p, q)
    path: LassoPath


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


def _as_2d(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def penalized_objective(X, Y, intercept, coef, lam, family, penalty_factor=None) -> float:
    """Value of the penalized objective described in the module docstring."""
    X = np.asarray(X, dtype=float)
    Y = _as_2d(Y)
    coef = np.asarray(coef, dtype=float).reshape(X.shape[1], -1)
    pf = np.ones(X.shape[1]) if penalty_factor is None else np.asarray(penalty_factor, dtype=float)
    eta = np.asarray(intercept, dtype=float) + X @ coef
    n = X.shape[0]
    if family in (GAUSSIAN, MGAUSSIAN):
        loss = 0.5 * np.sum((Y - eta) ** 2) / n
    elif family == BINOMIAL:
        loss = -np.sum(Y * eta - np.logaddexp(0.0, eta)) / n
    else:
        loss = np.sum(np.exp(eta) - Y * eta) / n
    return float(loss + lam * np.sum(pf * np.linalg.norm(coef, axis=1)))


class _Problem:
    """Shared state for solving one design at many lambdas."""

    def __init__(self, X, Y, family, spec: PenaltySpec):
        X = np.asfortranarray(X, dtype=float)
        Y = _as_2d(Y)
        if X.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("design matrix contains non-finite values")
        check_response(Y, family)
        if family != MGAUSSIAN and Y.shape[1] != 1:
            raise ValueError(f"family {family!r} takes a single response column")
        self.X, self.Y, self.family, self.spec = X, Y, family, spec
        self.n, self.p = X.shape
        self.q = Y.shape[1]
        self.pf, self.lower, self.upper = spec.resolved(self.p)
        if family == MGAUSSIAN:
            finite = np.isfinite(self.lower) & (self.lower != 0) | np.isfinite(self.upper) & (self.upper != 0)
            if finite.any():
                raise ValueError("mgaussian supports sign constraints only (bounds of 0 or infinity)")
        self.X2 = X * X
        self.unpenalized = np.flatnonzero(self.pf == 0)
        self._gram = None

    # -- helpers -----------------------------------------------------------

    def moments(self, w):
        sw = w.sum()
        xbar = (self.X.T @ w) / sw
        vc = self.X2.T @ w - sw * xbar * xbar
        vc[vc < 1e-14 * np.maximum(1.0, self.X2.T @ w)] = 0.0
        return xbar, vc

    def thresholds(self, lam):
        return np.where(self.pf > 0, lam * self.pf, 0.0)

    def scores(self, G):
        """How strongly each zero coefficient wants to leave 0, given the negative gradient G (p, q)."""
        pos = np.where(self.upper[:, None] > 0, np.maximum(G, 0.0), 0.0)
        neg = np.where(self.lower[:, None] < 0, np.maximum(-G, 0.0), 0.0)
        proj = pos + neg
        if self.q == 1:
            return proj[:, 0]
        return np.sqrt(np.sum(proj * proj, axis=1))

    def mu(self, eta):
        if self.family == BINOMIAL:
            return logistic(eta)
        return np.exp(np.minimum(eta, 700.0))

    # -- weighted least squares on a working set ----------------------------

    def wls(self, z, w, beta, b0, lam, work_init):
        """Solve the weighted lasso with working response ``z`` (n, q)."""
        xbar, vc = self.moments(w)
        thr = self.thresholds(lam)
        R = z - b0 - self.X @ beta
        sw = w.sum()
        R -= (w @ R) / sw
        b0 = (z - self.X @ beta - R)[0]  # consistent intercept after the centering step
        work = np.union1d(work_init, self.unpenalized)
        work = np.union1d(work, np.flatnonzero(np.any(beta != 0, axis=1)))
        max_sweeps = self.spec.max_sweeps
        total = 0
        while True:
            work_idx = work.astype(np.int64)
            if self.q == 1 and self.family != MGAUSSIAN:
                Xc = self.X[:, work_idx] - xbar[work_idx]
                WX = w[:, None] * Xc
                if self.family == GAUSSIAN:
                    # constant weights: one Gram matrix serves the whole path
                    if self._gram is None:
                        Xa = self.X - xbar
                        self._gram = Xa.T @ (w[:, None] * Xa)
                        self._gram[np.diag_indices(self.p)] = vc
                    gram = self._gram[np.ix_(work_idx, work_idx)]
                else:
                    gram = Xc.T @ WX
                    gram[np.diag_indices(work_idx.size)] = vc[work_idx]
                grad = WX.T @ R[:, 0]
                b = beta[work_idx, 0].copy()
                sweeps, ok = _cov_kernel(gram, grad, b, thr[work_idx], self.lower[work_idx],
                                         self.upper[work_idx], self.spec.tol, max_sweeps)
                delta = b - beta[work_idx, 0]
                R[:, 0] -= Xc @ delta
                b0 = b0 - xbar[work_idx] @ delta
                beta[work_idx, 0] = b
            else:
                shift, sweeps, ok = _group_cd_kernel(self.X, R, w, beta, work_idx, xbar, vc, thr,
                                                     self.lower, self.upper, self.spec.tol, max_sweeps)
                b0 = b0 + shift
            total += sweeps
            if not ok:
                return beta, b0, total, False
            G = self.X.T @ (w[:, None] * R)
            score = self.scores(G)
            outside = np.ones(self.p, dtype=bool)
            outside[work] = False
            viol = np.flatnonzero(outside & (score > thr) & (vc > 0))
            if viol.size == 0:
                return beta, b0, total, True
            work = np.union1d(work, viol)

    # -- one lambda ----------------------------------------------------------

    def solve(self, lam, beta, b0, strong):
        """Returns (beta, b0, sweeps, separated)."""
        n = self.n
        if self.family in (GAUSSIAN, MGAUSSIAN):
            w = np.full(n, 1.0 / n)
            beta, b0, sweeps, ok = self.wls(self.Y, w, beta, b0, lam, strong)
            if not ok:
                raise ConvergenceError(f"coordinate descent did not converge at lambda={lam:.4g}")
            return beta, b0, sweeps, False
        return self._irls(lam, beta, b0, strong)

    def _irls(self, lam, beta, b0, strong):
        y = self.Y
        obj = penalized_objective(self.X, y, b0, beta, lam, self.family, self.pf)
        total = 0
        separated = False
        for _ in range(MAX_IRLS):
            eta = b0 + self.X @ beta
            mu = self.mu(eta)
            if self.family == BINOMIAL:
                var = mu * (1.0 - mu)
            else:
                var = mu
            var = np.maximum(var, WEIGHT_FLOOR)
            z = eta + (y - mu) / var
            w = var[:, 0] / self.n
            new_beta, new_b0, sweeps, ok = self.wls(z, w, beta.copy(), b0.copy(), lam, strong)
            total += sweeps
            if not ok:
                raise ConvergenceError(f"coordinate descent did not converge at lambda={lam:.4g}")
            new_obj = penalized_objective(self.X, y, new_b0, new_beta, lam, self.family, self.pf)
            halvings = 0
            while new_obj > obj + 1e-12 * max(1.0, abs(obj)) and halvings < 30:
                new_beta = 0.5 * (beta + new_beta)
                new_b0 = 0.5 * (b0 + new_b0)
                new_obj = penalized_objective(self.X, y, new_b0, new_beta, lam, self.family, self.pf)
                halvings += 1
            delta = max(np.max(np.abs(new_beta - beta), initial=0.0), float(np.max(np.abs(new_b0 - b0))))
            beta, b0, obj = new_beta, new_b0, new_obj
            if self.family == BINOMIAL and np.max(np.abs(b0 + self.X @ beta)) > ETA_CAP:
                # no finite optimum past the cap; stop here and flag the fit
                separated = True
            if delta < self.spec.tol or separated:
                return beta, b0, total, separated
        raise ConvergenceError(f"IRLS did not converge at lambda={lam:.4g}")

    # -- path ----------------------------------------------------------------

    def null_fit(self):
        """Intercept plus unpenalized columns; every penalized coefficient at 0."""
        beta = np.zeros((self.p, self.q))
        b0 = self._initial_intercept()
        if self.unpenalized.size:
            # a finite stand-in for an infinite lambda keeps 0 * lambda well defined
            beta, b0, _, _ = self.solve(_HUGE, beta, b0, self.unpenalized)
        return beta, b0

    def _initial_intercept(self):
        mean = self.Y.mean(axis=0)
        if self.family == BINOMIAL:
            return np.log(mean / (1 - mean))
        if self.family == POISSON:
            return np.log(mean)
        return mean.copy()

    def deviance(self, beta, b0) -> float:
        loss = "deviance" if self.family in (BINOMIAL, POISSON) else None
        return float(np.sum(pointwise_loss(self.family, self.Y, b0 + self.X @ beta, loss)))

    def gradient(self, beta, b0):
        """Negative gradient of the unpenalized loss, shape (p, q)."""
        eta = b0 + self.X @ beta
        if self.family in (GAUSSIAN, MGAUSSIAN):
            resid = self.Y - eta
        else:
            resid = self.Y - self.mu(eta)
        return self.X.T @ resid / self.n

    def lambda_grid(self, beta0, b00):
        if self.spec.lambdas is not None:
            return np.asarray(self.spec.lambdas, dtype=float)
        score = self.scores(self.gradient(beta0, b00))
        pen = self.pf > 0
        lam_max = float(np.max(score[pen] / self.pf[pen])) if pen.any() else 0.0
        if not lam_max > 0:
            lam_max = 1e-6
        ratio = self.spec.lambda_min_ratio
        if ratio is None:
            ratio = 1e-4 if self.n > self.p else 1e-2
        return lam_max * ratio ** (np.arange(self.spec.n_lambda) / max(1, self.spec.n_lambda - 1))

    def path(self, lambdas=None) -> LassoPath:
        beta, b0 = self.null_fit()
        # the head of the default grid is the null model by construction
        at_null = lambdas is None and self.spec.lambdas is None
        if lambdas is None:
            lambdas = self.lambda_grid(beta, b0)
        L = len(lambdas)
        intercepts = np.zeros((L, self.q))
        coefs = np.zeros((L, self.p, self.q))
        sweeps = np.zeros(L, dtype=np.int64)
        separated = np.zeros(L, dtype=bool)
        lam_prev = None
        stop_early = self.spec.early_stop and self.spec.lambdas is None and at_null
        if stop_early:
            null_dev = self.deviance(np.zeros_like(beta), self._initial_intercept())
            prev_ratio = 0.0
        for i, lam in enumerate(lambdas):
            score = self.scores(self.gradient(beta, b0))
            prev = lam if lam_prev is None else lam_prev
            strong = np.flatnonzero(score >= self.pf * (2 * lam - prev))
            try:
                if not (i == 0 and at_null):
                    beta, b0, sweeps[i], separated[i] = self.solve(lam, beta, b0, strong)
            except ConvergenceError as exc:
                raise ConvergenceError(f"{exc} (lambda index {i})", i) from None
            intercepts[i] = b0
            coefs[i] = beta
            lam_prev = lam
            if stop_early and i > 0 and null_dev > 0:
                # deviance explained has saturated: the rest of the grid adds nothing
                ratio = 1.0 - self.deviance(beta, b0) / null_dev
                if ratio - prev_ratio < 1e-5 * ratio or ratio > 0.999:
                    L = i + 1
                    break
                prev_ratio = ratio
        lambdas = np.asarray(lambdas, dtype=float)[:L]
        intercepts, coefs, sweeps, separated = intercepts[:L], coefs[:L], sweeps[:L], separated[:L]
        if separated.any():
            first = int(np.argmax(separated))
            warnings.warn(f"binomial fit looks separable from lambda index {first} on "
                          f"(|eta| > {ETA_CAP:g})", SeparationWarning, stacklevel=3)
        return LassoPath(self.family, lambdas, intercepts, coefs, sweeps, separated)


def fit_path(X, Y, family: str = GAUSSIAN, spec: PenaltySpec | None = None) -> LassoPath:
    """Lasso path over a decreasing lambda grid, with warm starts."""
    return _Problem(X, Y, family, spec or PenaltySpec()).path()


def fit_to_lambda(X, Y, lam: float, family: str = GAUSSIAN, spec: PenaltySpec | None = None):
    """Fit at a single ``lam`` by following a warm-started path down to it.

    Returns ``(intercept (q,), coef (p, q), path)``.
    """
    spec = spec or PenaltySpec()
    if spec.lambdas is not None:
        raise ValueError("fit_to_lambda builds its own grid; leave spec.lambdas unset")
    prob = _Problem(X, Y, family, spec)
    lam_max = prob.lambda_grid(*prob.null_fit())[0]
    lam = float(lam)
    grid = np.array([lam]) if lam >= lam_max else np.geomspace(lam_max, lam, spec.n_lambda)
    path = prob.path(grid)
    return path.intercepts[-1].copy(), path.coefs[-1].copy(), path


def fit_single(X, Y, lam: float, family: str = GAUSSIAN, spec: PenaltySpec | None = None):
    """Cold-start fit at one lambda: ``(intercept (q,), coef (p, q))``."""
    prob = _Problem(X, Y, family, spec or PenaltySpec())
    beta, b0 = prob.null_fit()
    strong = np.arange(prob.p)
    beta, b0, _, _ = prob.solve(float(lam), beta, b0, strong)
    return b0, beta


def gaussian_sweeps(X, y, lam, sweeps: int, penalty_factor=None, lower=-np.inf, upper=np.inf,
                    beta=None, intercept=None):
    """Run exactly ``sweeps`` full coordinate-descent sweeps (gaussian family).

    Exposed for monitoring the objective sweep by sweep.
    """
    X = np.asfortranarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    spec = PenaltySpec(penalty_factor=penalty_factor, lower=lower, upper=upper)
    pf, lo, up = spec.resolved(p)
    w = np.full(n, 1.0 / n)
    xbar = X.T @ w
    vc = (X * X).T @ w - xbar * xbar
    beta = np.zeros(p) if beta is None else np.array(beta, dtype=float)
    b0 = float(np.mean(y - X @ beta)) if intercept is None else float(intercept)
    r = y - b0 - X @ beta
    b0 += r.mean()
    r -= r.mean()
    thr = np.where(pf > 0, lam * pf, 0.0)
    shift, _, _ = _cd_kernel(X, r, w, beta, np.arange(p, dtype=np.int64), xbar, vc, thr, lo, up, 0.0, sweeps)
    return b0 + shift, beta


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------


def pointwise_loss(family: str, Y, eta, loss: str | None = None) -> np.ndarray:
    """Per-observation loss for held-out rows; ``eta`` may carry a leading lambda axis."""
    Y = _as_2d(Y)
    loss = loss or default_loss(family)
    if family in (GAUSSIAN, MGAUSSIAN):
        return np.sum((Y - eta) ** 2, axis=-1)
    if family == BINOMIAL:
        p = logistic(eta)
        if loss == "brier":
            return np.sum((Y - p) ** 2, axis=-1)
        p = np.clip(p, 1e-15, 1 - 1e-15)
        return -2 * np.sum(Y * np.log(p) + (1 - Y) * np.log(1 - p), axis=-1)
    mu = np.exp(np.minimum(eta, 700.0))
    if loss == "mse":
        return np.sum((Y - mu) ** 2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(Y > 0, Y * np.log(Y / mu), 0.0)
    return 2 * np.sum(term - (Y - mu), axis=-1)


def default_loss(family: str) -> str:
    return {GAUSSIAN: "mse", MGAUSSIAN: "mse", BINOMIAL: "brier", POISSON: "deviance"}[family]


def select_index(mean: np.ndarray, se: np.ndarray, rule: str = "1se") -> tuple[int, int]:
    """(index of the minimum, index chosen by ``rule``); lambdas are in decreasing order."""
    i_min = int(np.argmin(mean))
    if rule == "min":
        return i_min, i_min
    if rule != "1se":
        raise ValueError(f"unknown selection rule {rule!r}")
    bound = mean[i_min] + se[i_min]
    i_1se = int(np.flatnonzero(mean <= bound)[0])
    return i_min, i_1se


def cv_select(X, Y, family: str = GAUSSIAN, spec: PenaltySpec | None = None, k: int = 10,
              rule: str = "1se", rng=None, loss: str | None = None, n_jobs: int = 1) -> CvResult:
    """k-fold cross-validated choice of lambda and the full-data fit at that lambda."""
    spec = spec or PenaltySpec()
    rng = np.random.default_rng(rng)
    Y = _as_2d(Y)
    n = Y.shape[0]
    if k < 2 or n < k:
        raise ValueError(f"need 2 <= k <= n (n={n}, k={k})")
    loss = loss or default_loss(family)
    full = _Problem(X, Y, family, spec)
    path = full.path()
    lambdas = path.lambdas
    strata = Y[:, 0] if family == BINOMIAL else None
    folds = kfold_assignment(n, k, rng, strata)

    def run_fold(f):
        test = folds == f
        sub = PenaltySpec(**{**spec.__dict__, "lambdas": lambdas})
        fold_path = _Problem(full.X[~test], Y[~test], family, sub).path()
        eta = fold_path.link(full.X[test])
        return pointwise_loss(family, Y[test], eta, loss).mean(axis=1)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            errors = np.array(list(pool.map(run_fold, range(k))))
    else:
        errors = np.array([run_fold(f) for f in range(k)])
    mean = errors.mean(axis=0)
    se = errors.std(axis=0, ddof=1) / np.sqrt(k)
    i_min, i_1se = select_index(mean, se, "1se")
    curve = CvCurve(lambdas, mean, se, errors, i_min, i_1se, loss)
    index = i_1se if rule == "1se" else select_index(mean, se, rule)[1]
    return CvResult(curve, index, float(lambdas[index]), path.intercepts[index].copy(),
                    path.coefs[index].copy(), path)
