"""Multiway tree grown with chi-square merging and Bonferroni-adjusted splits.

At each node and for each predictor, categories are merged pairwise while
the most similar pair (highest Pearson chi-square p-value on its 2 x 2
table) has p above ``alpha_merge``.  Nominal predictors may merge any pair;
numeric predictors are cut into training deciles and treated as ordinal, so
only adjacent bins merge.  Groups smaller than ``min_leaf`` are then folded
into their most similar neighbour.  The predictor whose merged table has
the smallest Bonferroni-adjusted p-value splits the node if that value is
at most ``alpha_split``.
"""

from __future__ import annotations

import numpy as np

from ..dataset import ColumnarDataset, Kind
from .base import MISSING, FeatureSpace, TrainConfig, binary_target
from .stats import bonferroni_nominal, bonferroni_ordinal, chi2_pvalue, pearson_chi2, chi2_sf
from .tree import Node, Tree, route


def decile_edges(x: np.ndarray, n_bins: int = 10) -> np.ndarray:
    """Interior quantile cut points of the non-blank values, deduplicated."""
    v = x[~np.isnan(x)]
    if len(v) == 0:
        return np.array([])
    qs = np.quantile(v, np.arange(1, n_bins) / n_bins)
    return np.unique(qs)


def pair_pvalue(n, e, a, b) -> float:
    """p-value of the 2 x 2 table comparing event rates of groups ``a`` and ``b``."""
    na, ea = n[a].sum(), e[a].sum()
    nb, eb = n[b].sum(), e[b].sum()
    return chi2_pvalue([[ea, na - ea], [eb, nb - eb]])


def merge_categories(n, e, cats, ordinal: bool, alpha_merge: float, min_leaf: int = 1) -> list[list[int]]:
    """Group the categories ``cats`` (sorted) by repeated pairwise merging.

    ``n`` and ``e`` are per-category row and event counts indexed by
    category.  Returns groups in ascending order of their first category.
    """
    groups = [[int(c)] for c in cats]

    def candidates():
        if ordinal:
            return [(i, i + 1) for i in range(len(groups) - 1)]
        return [(i, j) for i in range(len(groups)) for j in range(i + 1, len(groups))]

    def merge(i, j):
        groups[i] = sorted(groups[i] + groups[j])
        del groups[j]

    while len(groups) > 1:
        scored = [(pair_pvalue(n, e, groups[i], groups[j]), i, j) for i, j in candidates()]
        p, i, j = max(scored, key=lambda t: t[0])  # first pair wins ties
        if p > alpha_merge:
            merge(i, j)
            continue
        sizes = [n[g].sum() for g in groups]
        small = [k for k, s in enumerate(sizes) if s < min_leaf]
        if not small:
            break
        k = min(small, key=lambda k: (sizes[k], k))
        p, i, j = max(((p, i, j) for p, i, j in scored if k in (i, j)), key=lambda t: t[0])
        merge(i, j)
    return groups


def _assess(x, y, n_cats, ordinal, cfg):
    """Best grouping of one predictor at a node and its adjusted p-value."""
    valid = x >= 0
    xv, yv = x[valid], y[valid]
    n = np.bincount(xv, minlength=n_cats)
    e = np.bincount(xv, weights=yv, minlength=n_cats)
    cats = np.flatnonzero(n)
    if len(cats) < 2:
        return None
    groups = merge_categories(n, e, cats, ordinal, cfg.alpha_merge, cfg.min_leaf)
    if len(groups) < 2:
        return None
    table = [[e[g].sum(), n[g].sum() - e[g].sum()] for g in groups]
    stat, df = pearson_chi2(table)
    if df == 0:
        return None
    p = chi2_sf(stat, df)
    c, r = len(cats), len(groups)
    mult = bonferroni_ordinal(c, r) if ordinal else bonferroni_nominal(c, r)
    return {"groups": groups, "chi2": stat, "df": df, "p": p, "p_adj": min(1.0, p * mult)}


def train_chaid(ds: ColumnarDataset, target: str, cfg: TrainConfig | None = None, features=None) -> Tree:
    cfg = cfg or TrainConfig()
    y = binary_target(ds, target)
    space = FeatureSpace.from_dataset(ds, features)
    cols, _ = space.align(ds)

    # CHAID sees every predictor as categories: numeric ones become decile bins
    binned: dict[str, np.ndarray] = {}
    meta: list[tuple[str, bool, int]] = []
    edges_by_name: dict[str, list[float]] = {}
    for f in space:
        x = cols[f.name]
        if f.kind is Kind.NUMERIC:
            edges = decile_edges(x, cfg.chaid_bins)
            b = np.searchsorted(edges, x, side="right").astype(np.int64)
            b[np.isnan(x)] = MISSING
            binned[f.name] = b
            edges_by_name[f.name] = edges.tolist()
            meta.append((f.name, True, len(edges) + 1))
        else:
            binned[f.name] = x
            meta.append((f.name, False, len(f.levels)))

    nodes: list[Node] = []

    def grow(idx: np.ndarray, depth: int) -> int:
        yi = y[idx]
        node = Node(n=len(idx), n_event=int(yi.sum()), depth=depth)
        node_id = len(nodes)
        nodes.append(node)
        if depth >= cfg.max_depth or node.n_event in (0, node.n) or node.n < 2 * cfg.min_leaf:
            return node_id
        best = None
        for name, ordinal, n_cats in meta:
            found = _assess(binned[name][idx], yi, n_cats, ordinal, cfg)
            if found and (best is None or found["p_adj"] < best[1]["p_adj"]):
                best = (name, found, ordinal)
        if best is None or best[1]["p_adj"] > cfg.alpha_split:
            return node_id
        name, found, ordinal = best
        groups = found["groups"]
        sizes = [int(np.isin(binned[name][idx], g).sum()) for g in groups]
        node.feature = name
        node.default = int(np.argmax(sizes))
        if ordinal:
            edges = edges_by_name[name]
            node.cuts = tuple(float(edges[g[0] - 1]) for g in groups[1:])
        else:
            node.groups = tuple(frozenset(g) for g in groups)
        node.stat = {k: found[k] for k in ("chi2", "df", "p", "p_adj")}
        which = route(node, cols[name][idx], ordinal)
        node.children = tuple(grow(idx[which == k], depth + 1) for k in range(len(groups)))
        return node_id

    grow(np.arange(ds.n_rows), 0)
    return Tree("chaid", space, nodes, target, {"config": cfg.to_dict(), "bin_edges": edges_by_name})
