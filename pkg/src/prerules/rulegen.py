"""Rule induction from a boosted ensemble of shallow trees."""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import glm
from .dataset import DataSet, subsample_indices
from .errors import DataError, RuleSyntaxError
from .tree import Condition, PredictorFrame, Tree, TreeConfig, grow_tree


@dataclass(frozen=True)
class Rule:
    """Conjunction of conditions; evaluates to 1 where all of them hold."""

    conditions: tuple[Condition, ...]
    id: str = ""

    def evaluate(self, ds: DataSet) -> np.ndarray:
        out = np.ones(ds.n_rows, dtype=bool)
        for cond in self.conditions:
            out &= cond.evaluate(ds)
        return out

    @property
    def variables(self) -> list[str]:
        """Variables in condition order, repeated if a variable appears twice."""
        return [c.variable for c in self.conditions]

    def __str__(self) -> str:
        return " & ".join(str(c) for c in self.conditions)

    def to_json(self) -> dict:
        return {"id": self.id, "conditions": [c.to_json() for c in self.conditions]}

    @classmethod
    def from_json(cls, obj: dict) -> "Rule":
        return cls(tuple(Condition.from_json(c) for c in obj["conditions"]), obj.get("id", ""))


_COND_RE = re.compile(r"^\s*(?P<var>.+?)\s*(?P<op><=|≤|>|\bin\b|∈)\s*(?P<rhs>.+?)\s*$")


def parse_rule(text: str, rule_id: str = "") -> Rule:
    """Parse the printed rule syntax, e.g. ``IDS > 10 & GAD in {Negative}``."""
    conds = []
    for part in text.split("&"):
        m = _COND_RE.match(part)
        if m is None:
            raise RuleSyntaxError(f"cannot parse condition {part.strip()!r} in {text!r}")
        var, op, rhs = m.group("var"), m.group("op"), m.group("rhs")
        if op in ("in", "∈"):
            if not (rhs.startswith("{") and rhs.endswith("}")):
                raise RuleSyntaxError(f"set condition needs braces: {part.strip()!r}")
            levels = tuple(v.strip() for v in rhs[1:-1].split(",") if v.strip())
            if not levels:
                raise RuleSyntaxError(f"empty level set in {part.strip()!r}")
            conds.append(Condition(var, "in", levels=levels))
        else:
            try:
                thr = float(rhs)
            except ValueError:
                raise RuleSyntaxError(f"threshold is not a number in {part.strip()!r}") from None
            conds.append(Condition(var, "<=" if op in ("<=", "≤") else ">", thr))
    return Rule(tuple(conds), rule_id)


@dataclass(frozen=True)
class BoostConfig:
    ntrees: int = 500
    learnrate: float = 0.01
    sampfrac: float = 0.5
    tree: TreeConfig = field(default_factory=TreeConfig)

    def __post_init__(self):
        if self.ntrees < 1:
            raise ValueError("ntrees must be at least 1")
        if not 0.0 <= self.learnrate <= 1.0:
            raise ValueError("learnrate must lie in [0, 1]")
        if not 0.0 < self.sampfrac <= 1.0:
            raise ValueError("sampfrac must lie in (0, 1]")


@dataclass
class RuleSet:
    rules: list[Rule]
    provenance: list[tuple[int, int]]
    support: np.ndarray | None = None
    # training-data indicator matrix (n x len(rules)); not serialized
    indicators: np.ndarray | None = field(default=None, repr=False)
    n_generated: int = 0

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def dump(self) -> str:
        return "\n".join(f"{r.id}\t{r}" for r in self.rules)


def pseudo_response(family: str, y, eta) -> np.ndarray:
    """Negative gradient of the family's loss at the current linear predictor."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise ValueError("linear predictor contains non-finite values")
    if family in (glm.GAUSSIAN, glm.MGAUSSIAN):
        return y - eta
    if family == glm.BINOMIAL:
        return y - glm.logistic(eta)
    if family == glm.POISSON:
        return y - np.exp(eta)
    raise ValueError(f"unknown family {family!r}")


def initial_eta(family: str, Y: np.ndarray) -> np.ndarray:
    """Intercept-only linear predictor, one value per response column."""
    mean = Y.mean(axis=0)
    if family == glm.BINOMIAL:
        p = np.clip(mean, 1e-10, 1 - 1e-10)
        return np.log(p / (1 - p))
    if family == glm.POISSON:
        return np.log(np.maximum(mean, 1e-10))
    return mean


def extract_rules(tree: Tree) -> list[Rule]:
    """One rule per non-root node: the conjunction of conditions on its path."""
    return [Rule(conds) for node, conds in tree.paths() if node.condition is not None]


def _membership(tree: Tree, frame: PredictorFrame) -> np.ndarray:
    """Boolean (n_nodes, n) matrix of which training rows reach each node."""
    member = np.zeros((len(tree.nodes), frame.ds.n_rows), dtype=bool)
    member[0] = True
    for node in tree.nodes:
        if node.children is None:
            continue
        left, right = (tree.nodes[c] for c in node.children)
        goes_left = left.condition.evaluate(frame.ds)
        member[left.id] = member[node.id] & goes_left
        member[right.id] = member[node.id] & ~goes_left
    return member


class _Deduplicator:
    """Tracks indicator vectors already seen (and, optionally, their complements)."""

    def __init__(self, n: int, drop_complements: bool = True):
        self.n = n
        self.drop_complements = drop_complements
        self.seen: set[bytes] = set()

    def offer(self, ind: np.ndarray) -> bool:
        """Register ``ind``; True if it is new and non-constant."""
        count = int(ind.sum())
        if count == 0 or count == self.n:
            return False
        key = np.packbits(ind).tobytes()
        if key in self.seen:
            return False
        if self.drop_complements and np.packbits(~ind).tobytes() in self.seen:
            return False
        self.seen.add(key)
        return True


def dedup_rules(rules: Sequence[Rule], ds: DataSet, provenance: Sequence[tuple[int, int]] | None = None,
                drop_complements: bool = True, reserved: Sequence[np.ndarray] = ()) -> RuleSet:
    """Keep the earliest rule of every group with equal or complementary indicators.

    Rules that match no row or every row are dropped. Indicator vectors in
    ``reserved`` (e.g. of confirmatory rules) count as already seen.
    """
    dd = _Deduplicator(ds.n_rows, drop_complements)
    for ind in reserved:
        dd.offer(np.asarray(ind, dtype=bool))
    kept, prov, cols = [], [], []
    provenance = list(provenance) if provenance is not None else [(0, i) for i in range(len(rules))]
    for rule, pv in zip(rules, provenance):
        ind = rule.evaluate(ds)
        if dd.offer(ind):
            kept.append(rule)
            prov.append(pv)
            cols.append(ind)
    return _ruleset(kept, prov, cols, ds.n_rows, len(rules))


def _ruleset(rules, prov, cols, n, n_generated) -> RuleSet:
    mat = np.column_stack(cols) if cols else np.zeros((n, 0), dtype=bool)
    return RuleSet(list(rules), list(prov), mat.mean(axis=0) if cols else np.zeros(0), mat, n_generated)


def response_matrix(ds: DataSet, family: str) -> np.ndarray:
    """Response columns as an (n, q) float matrix, validated for ``family``."""
    if not ds.response_names:
        raise DataError("dataset has no response column")
    if family != glm.MGAUSSIAN and len(ds.response_names) > 1:
        raise DataError(f"family {family!r} takes a single response; use 'mgaussian' for several")
    cols = []
    for name in ds.response_names:
        spec = ds.spec(name)
        if spec.kind == "categorical":
            if family != glm.BINOMIAL or len(spec.levels) != 2:
                raise DataError(f"response {name!r} is categorical; only two-level responses are "
                                "supported (binomial family)")
            # the second level is the target class
            cols.append((ds.values(name) == 1).astype(float))
        else:
            cols.append(ds.values(name).astype(float))
    Y = np.column_stack(cols)
    glm.check_response(Y, family)
    return Y


def generate_rules(ds: DataSet, family: str = glm.GAUSSIAN, config: BoostConfig = BoostConfig(),
                   rng: np.random.Generator | int | None = None, *, drop_complements: bool = True,
                   reserved: Sequence[np.ndarray] = (), n_jobs: int = 1) -> RuleSet:
    """Grow ``config.ntrees`` trees by stochastic gradient boosting and collect their rules.

    Tree ``t`` is grown on a subsample, on the pseudo-response of the current
    linear predictor (for multivariate responses, of response ``t mod q``). The
    linear predictor of all rows is then moved by ``learnrate`` times the tree's
    predictions. Every non-root node becomes a candidate rule, numbered in
    generation order; duplicates are removed on the fly.
    """
    rng = np.random.default_rng(rng)
    Y = response_matrix(ds, family)
    n, q = Y.shape
    frame = PredictorFrame(ds)
    if not frame.names:
        raise DataError("dataset has no predictor columns")
    eta = np.broadcast_to(initial_eta(family, Y), Y.shape).copy()
    seeds = np.random.SeedSequence(int(rng.integers(2**63))).spawn(config.ntrees)

    def grow(t, target):
        trng = np.random.default_rng(seeds[t])
        rows = subsample_indices(n, config.sampfrac, trng)
        return grow_tree(ds, rows, target, config.tree, trng, frame)

    if config.learnrate == 0 and n_jobs > 1:
        targets = [pseudo_response(family, Y, eta)[:, t % q] for t in range(min(q, config.ntrees))]
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(lambda t: grow(t, targets[t % q]), range(config.ntrees)))
    else:
        trees = None

    dd = _Deduplicator(n, drop_complements)
    for ind in reserved:
        dd.offer(np.asarray(ind, dtype=bool))
    kept, prov, cols = [], [], []
    counter = 0
    for t in range(config.ntrees):
        k = t % q
        if trees is not None:
            tree = trees[t]
        else:
            tree = grow(t, pseudo_response(family, Y[:, k], eta[:, k]))
        member = _membership(tree, frame)
        for node, conds in tree.paths():
            if node.condition is None:
                continue
            counter += 1
            if dd.offer(member[node.id]):
                kept.append(Rule(conds, f"rule{counter}"))
                prov.append((t, node.id))
                cols.append(member[node.id])
        if config.learnrate > 0 and tree.n_splits:
            leaves = [nd for nd in tree.nodes if nd.is_leaf]
            step = np.zeros(n)
            for leaf in leaves:
                step[member[leaf.id]] = leaf.value
            eta[:, k] += config.learnrate * step
    return _ruleset(kept, prov, cols, n, counter)
