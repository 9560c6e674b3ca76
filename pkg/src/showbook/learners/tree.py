"""Tree structure shared by the CART and CHAID learners.

Every internal node splits on one feature:

* numeric features carry sorted ``cuts``; a value goes to child
  ``searchsorted(cuts, x, side="right")``, so child ``k`` holds
  ``cuts[k-1] <= x < cuts[k]``;
* categorical features carry one set of level indices per child.

Blank values, and categorical labels that no child claims (never seen at
that node, or never seen in training at all), go to the ``default`` child,
which is the child that received the most training rows.  Routing is
therefore total: every row reaches exactly one leaf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..dataset import ColumnarDataset, Kind
from .base import MISSING, FeatureSpace


@dataclass
class Node:
    n: int
    n_event: int
    depth: int
    feature: str | None = None
    cuts: tuple[float, ...] = ()
    groups: tuple[frozenset, ...] = ()
    children: tuple[int, ...] = ()
    default: int = 0  # position in ``children``
    stat: dict = field(default_factory=dict)

    @property
    def p_event(self) -> float:
        return self.n_event / self.n

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def to_dict(self) -> dict:
        d = {"n": self.n, "n_event": self.n_event, "depth": self.depth}
        if not self.is_leaf:
            d.update(feature=self.feature, children=list(self.children), default=self.default, stat=self.stat)
            if self.cuts:
                d["cuts"] = list(self.cuts)
            else:
                d["groups"] = [sorted(g) for g in self.groups]
        return d

    @classmethod
    def from_dict(cls, d) -> "Node":
        return cls(
            n=d["n"],
            n_event=d["n_event"],
            depth=d["depth"],
            feature=d.get("feature"),
            cuts=tuple(d.get("cuts", ())),
            groups=tuple(frozenset(g) for g in d.get("groups", ())),
            children=tuple(d.get("children", ())),
            default=d.get("default", 0),
            stat=d.get("stat", {}),
        )


def route(node: Node, x: np.ndarray, numeric: bool) -> np.ndarray:
    """Child position for each value in ``x`` at an internal node."""
    if numeric:
        out = np.searchsorted(np.asarray(node.cuts), x, side="right")
        out[np.isnan(x)] = node.default
        return out
    out = np.full(len(x), node.default, dtype=np.int64)
    for k, group in enumerate(node.groups):
        out[np.isin(x, list(group))] = k
    out[x == MISSING] = node.default
    return out


class Tree:
    """A fitted CART or CHAID tree; ``nodes[0]`` is the root."""

    def __init__(self, kind: str, space: FeatureSpace, nodes: list[Node], target: str, extra: dict | None = None):
        self.kind = kind
        self.space = space
        self.nodes = nodes
        self.target = target
        self.extra = extra or {}
        self._kinds = {f.name: f.kind for f in space}

    def __repr__(self):
        return f"<Tree kind={self.kind} nodes={len(self.nodes)} leaves={len(self.leaves())} depth={self.depth}>"

    @property
    def depth(self) -> int:
        return max(n.depth for n in self.nodes)

    def leaves(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.is_leaf]

    def apply(self, ds: ColumnarDataset) -> np.ndarray:
        cols, _ = self.space.align(ds)
        return self.apply_aligned(cols, ds.n_rows)

    def apply_aligned(self, cols: dict[str, np.ndarray], n_rows: int) -> np.ndarray:
        leaf = np.empty(n_rows, dtype=np.int64)
        stack = [(0, np.arange(n_rows))]
        while stack:
            node_id, idx = stack.pop()
            node = self.nodes[node_id]
            if node.is_leaf:
                leaf[idx] = node_id
                continue
            which = route(node, cols[node.feature][idx], self._kinds[node.feature] is Kind.NUMERIC)
            for k, child in enumerate(node.children):
                sub = idx[which == k]
                if len(sub):
                    stack.append((child, sub))
        return leaf

    def predict_proba(self, ds: ColumnarDataset) -> np.ndarray:
        p = np.array([n.p_event if n.is_leaf else np.nan for n in self.nodes])
        return p[self.apply(ds)]

    def to_dict(self) -> dict:
        return {"target": self.target, "nodes": [n.to_dict() for n in self.nodes], "extra": self.extra}

    @classmethod
    def from_dict(cls, kind: str, space: FeatureSpace, d) -> "Tree":
        return cls(kind, space, [Node.from_dict(x) for x in d["nodes"]], d["target"], d.get("extra", {}))


@dataclass(frozen=True)
class NumericCondition:
    """``lo <= x < hi``, or blank when ``missing`` is set."""

    feature: str
    lo: float
    hi: float
    missing: bool

    def mask(self, cols) -> np.ndarray:
        x = cols[self.feature]
        with np.errstate(invalid="ignore"):
            inside = (x >= self.lo) & (x < self.hi)
        return inside | (np.isnan(x) & self.missing)

    def text(self) -> str:
        if math.isinf(self.lo):
            s = f"{self.feature} < {self.hi:.6g}"
        elif math.isinf(self.hi):
            s = f"{self.feature} >= {self.lo:.6g}"
        else:
            s = f"{self.lo:.6g} <= {self.feature} < {self.hi:.6g}"
        return f"({s} or blank)" if self.missing else s


@dataclass(frozen=True)
class CategoricalCondition:
    """Label in ``levels``; ``negate`` flips that to "not in ``levels``"."""

    feature: str
    levels: frozenset
    codes: frozenset
    negate: bool
    missing: bool

    def mask(self, cols) -> np.ndarray:
        x = cols[self.feature]
        hit = np.isin(x, list(self.codes))
        if self.negate:
            hit = ~hit & (x != MISSING)
        return hit | ((x == MISSING) & self.missing)

    def text(self) -> str:
        op = "not in" if self.negate else "in"
        s = f"{self.feature} {op} {{{', '.join(sorted(self.levels))}}}"
        return f"({s} or blank)" if self.missing else s


@dataclass(frozen=True)
class Rule:
    conditions: tuple
    p_event: float
    n: int
    n_event: int
    leaf: int

    def mask(self, cols, n_rows: int) -> np.ndarray:
        m = np.ones(n_rows, dtype=bool)
        for c in self.conditions:
            m &= c.mask(cols)
        return m

    def text(self) -> str:
        cond = " AND ".join(c.text() for c in self.conditions) or "(all customers)"
        return f"IF {cond} THEN p={self.p_event:.4f} (n={self.n})"

    def to_dict(self) -> dict:
        return {
            "if": [c.text() for c in self.conditions],
            "p_event": self.p_event,
            "n": self.n,
            "n_event": self.n_event,
            "leaf": self.leaf,
        }


def extract_rules(tree: Tree) -> list[Rule]:
    """One rule per leaf, in depth-first order; the rules partition the input space."""
    rules: list[Rule] = []
    levels = {f.name: f.levels for f in tree.space}

    def walk(node_id: int, path: tuple):
        node = tree.nodes[node_id]
        if node.is_leaf:
            rules.append(Rule(path, node.p_event, node.n, node.n_event, node_id))
            return
        numeric = tree._kinds[node.feature] is Kind.NUMERIC
        for k, child in enumerate(node.children):
            missing = k == node.default
            if numeric:
                lo = node.cuts[k - 1] if k > 0 else -math.inf
                hi = node.cuts[k] if k < len(node.cuts) else math.inf
                cond = NumericCondition(node.feature, lo, hi, missing)
            elif k == node.default:
                others = frozenset().union(*(g for j, g in enumerate(node.groups) if j != k))
                cond = CategoricalCondition(
                    node.feature, frozenset(levels[node.feature][i] for i in others), others, True, True
                )
            else:
                group = node.groups[k]
                cond = CategoricalCondition(
                    node.feature, frozenset(levels[node.feature][i] for i in group), group, False, False
                )
            walk(child, path + (cond,))

    walk(0, ())
    return rules


def predict_with_rules(rules: list[Rule], space: FeatureSpace, ds: ColumnarDataset) -> tuple[np.ndarray, np.ndarray]:
    """Rule-based probabilities and the number of rules matching each row."""
    cols, _ = space.align(ds)
    p = np.full(ds.n_rows, np.nan)
    hits = np.zeros(ds.n_rows, dtype=np.int64)
    for rule in rules:
        m = rule.mask(cols, ds.n_rows)
        hits += m
        p[m] = rule.p_event
    return p, hits
