"""Depth-limited regression trees with unbiased or exhaustive split selection.

The unbiased mode chooses the split variable first, by comparing p-values of a
simple association test between every candidate and the response, and only
then searches for the best cut point on that variable. Because every candidate
gets one test irrespective of its number of distinct values, variables with
many possible cut points are not favoured. The exhaustive (CART-style) mode
searches all variables and all cut points jointly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaincc, gammaln

from .dataset import CATEGORICAL, NUMERIC, DataSet, format_number
from .errors import DataError, UnseenLevelError

UNBIASED = "unbiased"
EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True)
class Condition:
    """A single split condition.

    ``op`` is ``"<="`` or ``">"`` for numeric thresholds and ``"in"`` for
    membership of a categorical variable in ``levels``.
    """

    variable: str
    op: str
    threshold: float | None = None
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.op in ("<=", ">"):
            if self.threshold is None:
                raise ValueError("numeric condition needs a threshold")
        elif self.op == "in":
            if not self.levels:
                raise ValueError("set condition needs at least one level")
        else:
            raise ValueError(f"unknown operator {self.op!r}")

    def evaluate(self, ds: DataSet) -> np.ndarray:
        spec = ds.spec(self.variable)
        if self.op == "in":
            if spec.kind != CATEGORICAL:
                raise DataError(f"{self.variable!r} is numeric; cannot test set membership")
            member = np.array([lvl in self.levels for lvl in spec.levels], dtype=bool)
            return member[ds.values(self.variable)]
        if spec.kind != NUMERIC:
            raise DataError(f"{self.variable!r} is categorical; cannot compare with a threshold")
        x = ds.values(self.variable)
        return x <= self.threshold if self.op == "<=" else x > self.threshold

    def holds(self, value) -> bool:
        if self.op == "in":
            return str(value) in self.levels
        value = float(value)
        return value <= self.threshold if self.op == "<=" else value > self.threshold

    def __str__(self) -> str:
        if self.op == "in":
            return f"{self.variable} in {{{', '.join(self.levels)}}}"
        return f"{self.variable} {self.op} {format_number(self.threshold)}"

    def to_json(self) -> dict:
        out = {"variable": self.variable, "op": self.op}
        if self.op == "in":
            out["levels"] = list(self.levels)
        else:
            out["threshold"] = self.threshold
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Condition":
        return cls(obj["variable"], obj["op"], obj.get("threshold"), tuple(obj.get("levels", ())))


@dataclass(frozen=True)
class TreeConfig:
    maxdepth: int = 3
    minsplit: int = 20
    minbucket: int = 7
    alpha: float = 0.05
    algorithm: str = UNBIASED
    mtry: int | None = None

    def __post_init__(self):
        if self.minbucket < 1:
            raise ValueError("minbucket must be at least 1")
        if self.maxdepth < 0:
            raise ValueError("maxdepth must be non-negative")
        if self.algorithm not in (UNBIASED, EXHAUSTIVE):
            raise ValueError(f"unknown tree algorithm {self.algorithm!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be positive")


@dataclass
class TreeNode:
    id: int
    depth: int
    n: int
    value: float
    condition: Condition | None = None  # the condition leading here from the parent
    children: tuple[int, int] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass
class Tree:
    """Nodes in preorder; node 0 is the root."""

    nodes: list[TreeNode] = field(default_factory=list)

    @property
    def n_splits(self) -> int:
        return sum(not nd.is_leaf for nd in self.nodes)

    @property
    def depth(self) -> int:
        return max(nd.depth for nd in self.nodes)

    def paths(self):
        """Yield ``(node, conditions from the root)`` for every node in preorder."""
        stack = [(0, ())]
        while stack:
            nid, conds = stack.pop()
            node = self.nodes[nid]
            yield node, conds
            if node.children is not None:
                left, right = node.children
                stack.append((right, conds + (self.nodes[right].condition,)))
                stack.append((left, conds + (self.nodes[left].condition,)))

    def leaf_ids(self, ds: DataSet) -> np.ndarray:
        """Id of the leaf each row of ``ds`` falls into."""
        at = np.zeros(ds.n_rows, dtype=np.int64)
        for node in self.nodes:
            if node.children is None:
                continue
            here = at == node.id
            if not here.any():
                continue
            left, right = (self.nodes[c] for c in node.children)
            goes_left = left.condition.evaluate(ds)
            if left.condition.op == "in":
                known = set(left.condition.levels) | set(right.condition.levels)
                labels = ds.labels(left.condition.variable)[here]
                for lab in labels:
                    if lab not in known:
                        raise UnseenLevelError(left.condition.variable, lab)
            at[here & goes_left] = left.id
            at[here & ~goes_left] = right.id
        return at

    def predict(self, ds: DataSet) -> np.ndarray:
        values = np.array([nd.value for nd in self.nodes])
        return values[self.leaf_ids(ds)]

    def format(self) -> str:
        lines = []
        for node, conds in self.paths():
            label = "root" if node.condition is None else str(node.condition)
            kind = "*" if node.is_leaf else ""
            lines.append(f"{'|   ' * node.depth}[{node.id}] {label} (n={node.n}, mean={node.value:.4g}){kind}")
        return "\n".join(lines)

    __str__ = format


def predict_tree(tree: Tree, row: dict) -> float:
    """Drop a single observation (a mapping of variable -> value) down the tree."""
    node = tree.nodes[0]
    while node.children is not None:
        left, right = (tree.nodes[c] for c in node.children)
        cond = left.condition
        value = row[cond.variable]
        if cond.op == "in" and str(value) not in cond.levels + right.condition.levels:
            raise UnseenLevelError(cond.variable, str(value))
        node = left if cond.holds(value) else right
    return node.value


# ---------------------------------------------------------------------------
# predictor frame
# ---------------------------------------------------------------------------


class PredictorFrame:
    """Column arrays of the predictors, arranged for fast split searches."""

    def __init__(self, ds: DataSet, names: Sequence[str] | None = None):
        names = list(ds.predictor_names if names is None else names)
        self.ds = ds
        self.names = names
        self.specs = [ds.spec(v) for v in names]
        self.is_cat = np.array([s.kind == CATEGORICAL for s in self.specs], dtype=bool)
        self.columns = [ds.values(v) for v in names]
        num = [ds.values(v) for v, c in zip(names, self.is_cat) if not c]
        self.num_pos = np.cumsum(~self.is_cat) - 1
        self.num = np.column_stack(num) if num else np.empty((ds.n_rows, 0))


def _numeric_stats(frame: PredictorFrame, rows: np.ndarray, yc: np.ndarray, which: np.ndarray):
    """(n - 1) * r^2 for each numeric candidate in ``which``."""
    x = frame.num[np.ix_(rows, frame.num_pos[which])]
    xc = x - x.mean(axis=0)
    sxx = np.einsum("ij,ij->j", xc, xc)
    sxy = xc.T @ yc
    syy = yc @ yc
    with np.errstate(invalid="ignore", divide="ignore"):
        r2 = sxy * sxy / (sxx * syy)
    r2 = np.where(sxx > 0, np.minimum(r2, 1.0), 0.0)
    return (len(rows) - 1) * r2


def _categorical_stat(codes: np.ndarray, yc: np.ndarray) -> tuple[float, int]:
    """(n - 1) * SSB / SST with its degrees of freedom (levels present - 1)."""
    counts = np.bincount(codes)
    sums = np.bincount(codes, weights=yc)
    present = counts > 0
    k = int(present.sum())
    if k < 2:
        return 0.0, 0
    ssb = np.sum(sums[present] ** 2 / counts[present])
    sst = yc @ yc
    return (len(codes) - 1) * ssb / sst, k - 1


def _log_pvalues(frame: PredictorFrame, rows: np.ndarray, yc: np.ndarray, cand: np.ndarray) -> np.ndarray:
    stats = np.zeros(len(cand))
    dfs = np.ones(len(cand))
    numeric = ~frame.is_cat[cand]
    if numeric.any():
        stats[numeric] = _numeric_stats(frame, rows, yc, cand[numeric])
    for pos in np.flatnonzero(~numeric):
        stats[pos], dfs[pos] = _categorical_stat(frame.columns[cand[pos]][rows], yc)
    logp = np.zeros(len(cand))
    ok = (dfs > 0) & (stats > 0)
    logp[ok] = chi2_logsf(stats[ok], dfs[ok])
    return logp


def chi2_logsf(x, df) -> np.ndarray:
    """Log upper-tail probability of the chi-square distribution.

    Far in the tail, where the regularized gamma function underflows, the
    leading term of its asymptotic expansion keeps the ordering of p-values.
    """
    a = np.asarray(df, dtype=float) / 2.0
    z = np.asarray(x, dtype=float) / 2.0
    a, z = np.broadcast_arrays(a, z)
    q = gammaincc(a, z)
    out = np.empty(q.shape)
    ok = q > 1e-300
    out[ok] = np.log(q[ok])
    far = ~ok
    out[far] = (a[far] - 1.0) * np.log(z[far]) - z[far] - gammaln(a[far])
    return out


def _best_cut(order_sums: np.ndarray, order_counts: np.ndarray, minbucket: int):
    """Best boundary along an ordering of (centered) group sums and counts.

    Returns ``(gain, position)``, where the left child takes groups ``0..position``.
    The gain is the reduction in squared error; with a centered response it equals
    ``S_L^2 * n / (n_L * n_R)``.
    """
    n = order_counts.sum()
    nl = np.cumsum(order_counts)[:-1]
    sl = np.cumsum(order_sums)[:-1]
    nr = n - nl
    valid = (nl >= minbucket) & (nr >= minbucket)
    if not valid.any():
        return -np.inf, -1
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = sl * sl * n / (nl * nr)
    gain = np.where(valid, gain, -np.inf)
    pos = int(np.argmax(gain))
    return float(gain[pos]), pos


def _split_on(frame: PredictorFrame, var: int, rows: np.ndarray, yc: np.ndarray, minbucket: int):
    """Best split of ``rows`` on predictor ``var``: ``(gain, left, right)`` or None."""
    spec = frame.specs[var]
    col = frame.columns[var][rows]
    if not frame.is_cat[var]:
        distinct, inverse = np.unique(col, return_inverse=True)
        if distinct.size < 2:
            return None
        sums = np.bincount(inverse, weights=yc, minlength=distinct.size)
        counts = np.bincount(inverse, minlength=distinct.size)
        gain, pos = _best_cut(sums, counts, minbucket)
        if pos < 0:
            return None
        thr = 0.5 * (distinct[pos] + distinct[pos + 1])
        # guard against midpoints that round onto the upper value
        if not distinct[pos] <= thr < distinct[pos + 1]:
            thr = distinct[pos]
        return gain, Condition(spec.name, "<=", float(thr)), Condition(spec.name, ">", float(thr))
    nlev = len(spec.levels)
    counts = np.bincount(col, minlength=nlev)
    sums = np.bincount(col, weights=yc, minlength=nlev)
    present = np.flatnonzero(counts > 0)
    if present.size < 2:
        return None
    means = sums[present] / counts[present]
    order = present[np.argsort(means, kind="stable")]
    gain, pos = _best_cut(sums[order], counts[order], minbucket)
    if pos < 0:
        return None
    left = set(order[: pos + 1].tolist())
    left_levels = tuple(lvl for i, lvl in enumerate(spec.levels) if i in left)
    right_levels = tuple(lvl for i, lvl in enumerate(spec.levels) if i not in left)
    return gain, Condition(spec.name, "in", levels=left_levels), Condition(spec.name, "in", levels=right_levels)


def _candidates(frame: PredictorFrame, config: TreeConfig, rng) -> np.ndarray:
    cand = np.arange(len(frame.names))
    if config.mtry is not None and config.mtry < cand.size:
        if rng is None:
            raise ValueError("mtry subsampling needs a random generator")
        cand = np.sort(rng.choice(cand, size=config.mtry, replace=False))
    return cand


def _choose(frame: PredictorFrame, rows: np.ndarray, yc: np.ndarray, config: TreeConfig, rng):
    """Variable index and its split for one node, or None to stop."""
    if np.ptp(yc) == 0:
        return None
    cand = _candidates(frame, config, rng)
    if config.algorithm == UNBIASED:
        logp = _log_pvalues(frame, rows, yc, cand)
        pos = int(np.argmin(logp))
        # Bonferroni: adjusted p = min(1, m * p)
        log_adj = min(0.0, logp[pos] + np.log(len(cand)))
        if config.alpha == 0 or log_adj > np.log(config.alpha):
            return None
        var = int(cand[pos])
        found = _split_on(frame, var, rows, yc, config.minbucket)
        return None if found is None else (var, found)
    best = None
    for var in cand:
        found = _split_on(frame, int(var), rows, yc, config.minbucket)
        if found is not None and found[0] > 0 and (best is None or found[0] > best[1][0]):
            best = (int(var), found)
    return best


def select_split_variable(ds: DataSet, rows, response, candidates: Sequence[str],
                          config: TreeConfig = TreeConfig(), rng=None) -> str | None:
    """Name of the variable a node on ``rows`` would split on, or None.

    ``response`` is aligned with the rows of ``ds``.
    """
    rows = np.asarray(rows, dtype=np.int64)
    frame = PredictorFrame(ds, candidates)
    y = np.asarray(response, dtype=float)[rows]
    chosen = _choose(frame, rows, y - y.mean(), config, rng)
    return None if chosen is None else frame.names[chosen[0]]


def best_split(ds: DataSet, rows, variable: str, response, minbucket: int = 7) -> Condition | None:
    """Left-child condition of the best split of ``rows`` on ``variable``."""
    rows = np.asarray(rows, dtype=np.int64)
    frame = PredictorFrame(ds, [variable])
    y = np.asarray(response, dtype=float)[rows]
    found = _split_on(frame, 0, rows, y - y.mean(), minbucket)
    return None if found is None else found[1]


def grow_tree(ds: DataSet, rows, response, config: TreeConfig = TreeConfig(), rng=None,
              frame: PredictorFrame | None = None) -> Tree:
    """Grow a tree on ``response[rows]`` (``response`` is aligned with ``ds``)."""
    rows = np.asarray(rows, dtype=np.int64)
    y_all = np.asarray(response, dtype=float)
    if frame is None:
        frame = PredictorFrame(ds)
    tree = Tree()

    def build(node_rows, depth, condition):
        y = y_all[node_rows]
        node = TreeNode(len(tree.nodes), depth, len(node_rows), float(y.mean()), condition)
        tree.nodes.append(node)
        if depth >= config.maxdepth or len(node_rows) < config.minsplit:
            return
        chosen = _choose(frame, node_rows, y - y.mean(), config, rng)
        if chosen is None:
            return
        _, (_, left_cond, right_cond) = chosen
        col = frame.columns[frame.names.index(left_cond.variable)][node_rows]
        if left_cond.op == "in":
            spec = frame.specs[frame.names.index(left_cond.variable)]
            member = np.array([lvl in left_cond.levels for lvl in spec.levels])
            goes_left = member[col]
        else:
            goes_left = col <= left_cond.threshold
        left_id = len(tree.nodes)
        build(node_rows[goes_left], depth + 1, left_cond)
        right_id = len(tree.nodes)
        build(node_rows[~goes_left], depth + 1, right_cond)
        node.children = (left_id, right_id)

    if rows.size == 0:
        raise DataError("cannot grow a tree on zero rows")
    build(rows, 0, None)
    return tree
