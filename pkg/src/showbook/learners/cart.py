"""Binary classification tree grown on Gini impurity decrease."""

from __future__ import annotations

import numpy as np

from ..dataset import ColumnarDataset, Kind
from .base import MISSING, FeatureSpace, TrainConfig, binary_target
from .tree import Node, Tree, route

MIN_GAIN = 1e-12


def gini_impurity(p):
    """Binary Gini impurity ``2 p (1 - p)`` of an event fraction."""
    p = np.asarray(p, dtype=float)
    out = 2.0 * p * (1.0 - p)
    return float(out) if out.ndim == 0 else out


def _score(n, e, nL, eL, nR, eR):
    with np.errstate(invalid="ignore", divide="ignore"):
        child = (nL * gini_impurity(eL / nL) + nR * gini_impurity(eR / nR)) / n
    return gini_impurity(e / n) - child


def _numeric_split(x, y, min_leaf):
    miss = np.isnan(x)
    nm, em = int(miss.sum()), int(y[miss].sum())
    xv, yv = x[~miss], y[~miss]
    if len(xv) < 2:
        return None
    order = np.argsort(xv, kind="stable")
    xs, cum = xv[order], np.cumsum(yv[order])
    nn, en = len(xs), int(cum[-1])
    pos = np.flatnonzero(xs[:-1] < xs[1:])
    if not len(pos):
        return None
    nL, eL = pos + 1, cum[pos]
    nR, eR = nn - nL, en - eL
    left_big = nL >= nR
    nL2, eL2 = nL + left_big * nm, eL + left_big * em
    nR2, eR2 = nR + ~left_big * nm, eR + ~left_big * em
    gain = _score(nn + nm, en + em, nL2, eL2, nR2, eR2)
    gain[(nL2 < min_leaf) | (nR2 < min_leaf)] = -np.inf
    best = int(np.argmax(gain))
    if not gain[best] > MIN_GAIN:
        return None
    i = pos[best]
    lo, hi = xs[i], xs[i + 1]
    cut = lo + (hi - lo) / 2.0
    if not lo < cut <= hi:
        cut = hi
    return float(gain[best]), {"cuts": (float(cut),), "default": 0 if left_big[best] else 1}


def _categorical_split(x, y, n_levels, min_leaf):
    miss = x == MISSING
    nm, em = int(miss.sum()), int(y[miss].sum())
    xv, yv = x[~miss], y[~miss]
    n_k = np.bincount(xv, minlength=n_levels)
    e_k = np.bincount(xv, weights=yv, minlength=n_levels)
    present = np.flatnonzero(n_k)
    if len(present) < 2:
        return None
    # sorting by event rate makes prefix cuts contain the optimal bipartition
    rate = e_k[present] / n_k[present]
    order = present[np.lexsort((present, rate))]
    cn, ce = np.cumsum(n_k[order])[:-1], np.cumsum(e_k[order])[:-1]
    nn, en = int(n_k.sum()), int(e_k.sum())
    nL, eL, nR, eR = cn, ce, nn - cn, en - ce
    left_big = nL >= nR
    nL2, eL2 = nL + left_big * nm, eL + left_big * em
    nR2, eR2 = nR + ~left_big * nm, eR + ~left_big * em
    gain = _score(nn + nm, en + em, nL2, eL2, nR2, eR2)
    gain[(nL2 < min_leaf) | (nR2 < min_leaf)] = -np.inf
    best = int(np.argmax(gain))
    if not gain[best] > MIN_GAIN:
        return None
    left = frozenset(int(c) for c in order[: best + 1])
    right = frozenset(int(c) for c in order[best + 1 :])
    return float(gain[best]), {"groups": (left, right), "default": 0 if left_big[best] else 1}


def train_cart(ds: ColumnarDataset, target: str, cfg: TrainConfig | None = None, features=None) -> Tree:
    """Grow a binary tree by greedy Gini-decrease splits.

    Growth stops at ``max_depth``, when a child would fall below
    ``min_leaf`` rows, or when no split lowers impurity.  Numeric cut points
    are midpoints between adjacent distinct values.
    """
    cfg = cfg or TrainConfig()
    y = binary_target(ds, target)
    space = FeatureSpace.from_dataset(ds, features)
    cols, _ = space.align(ds)
    kinds = [(f.name, f.kind, len(f.levels)) for f in space]
    nodes: list[Node] = []

    def grow(idx: np.ndarray, depth: int) -> int:
        yi = y[idx]
        node = Node(n=len(idx), n_event=int(yi.sum()), depth=depth)
        node_id = len(nodes)
        nodes.append(node)
        if depth >= cfg.max_depth or node.n_event in (0, node.n) or node.n < 2 * cfg.min_leaf:
            return node_id
        best = None
        for name, kind, n_levels in kinds:
            x = cols[name][idx]
            found = (
                _numeric_split(x, yi, cfg.min_leaf)
                if kind is Kind.NUMERIC
                else _categorical_split(x, yi, n_levels, cfg.min_leaf)
            )
            if found and (best is None or found[0] > best[1] + MIN_GAIN):
                best = (name, found[0], found[1])
        if best is None:
            return node_id
        name, gain, split = best
        node.feature = name
        node.cuts = split.get("cuts", ())
        node.groups = split.get("groups", ())
        node.default = split["default"]
        node.stat = {"gini_decrease": gain}
        which = route(node, cols[name][idx], bool(node.cuts))
        node.children = tuple(grow(idx[which == k], depth + 1) for k in range(2))
        return node_id

    grow(np.arange(ds.n_rows), 0)
    return Tree("cart", space, nodes, target, {"config": cfg.to_dict()})
