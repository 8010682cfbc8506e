"""CART regression tree (variance reduction) with target-mean ordered
categorical splits, grown breadth-first with vectorised split search."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, EmptyData, ShapeError, UnknownEntity
from .ingestion import apply_log
from .model import EmbeddingSpace, TradeRecord


class Kind(str, Enum):
    NUMERIC = "Numeric"
    CATEGORICAL = "Categorical"


@dataclass
class FeatureMatrix:
    """Rows of numeric values; categorical columns hold integer codes into
    ``categories[name]``."""

    columns: list[tuple[str, Kind]]
    rows: np.ndarray
    target: np.ndarray
    categories: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float).reshape(len(self.target), -1) \
            if len(self.target) else np.empty((0, len(self.columns)))
        self.target = np.asarray(self.target, dtype=float)
        if self.rows.shape[1] != len(self.columns):
            raise ShapeError(f"{self.rows.shape[1]} values per row for {len(self.columns)} columns")
        if self.rows.shape[0] != self.target.size:
            raise ShapeError("target length differs from row count")

    @property
    def names(self) -> list[str]:
        return [c[0] for c in self.columns]

    def subset(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.columns, self.rows[idx], self.target[idx], self.categories)


@dataclass(frozen=True)
class DTreeConfig:
    max_depth: int = 50
    min_leaf: int = 1
    min_gain: float = 0.0

    def __post_init__(self):
        if self.max_depth < 0 or self.min_leaf < 1 or self.min_gain < 0:
            raise ConfigError("need max_depth >= 0, min_leaf >= 1, min_gain >= 0")


def _codes(values: Sequence[str]) -> tuple[np.ndarray, list[str]]:
    cats = sorted(set(values))
    lookup = {c: i for i, c in enumerate(cats)}
    return np.array([lookup[v] for v in values], dtype=float), cats


def build_features(records: Sequence[TradeRecord], embeddings: EmbeddingSpace | None = None,
                   log: bool = False) -> FeatureMatrix:
    """Basic mode: reporter, partner, year, month, commodity, distance, both GDPs.
    Embedding mode: commodity plus the reporter and partner entity vectors.
    In log mode covariates and target are log-transformed (log1p for the target)."""
    if not records:
        raise EmptyData("no records")
    if log:
        records = apply_log(records)
    target = np.array([r.trade_value for r in records])
    com, com_cats = _codes([r.commodity for r in records])
    if embeddings is None:
        rep, rep_cats = _codes([r.reporter.label for r in records])
        par, par_cats = _codes([r.partner.label for r in records])
        cols = [("reporter", Kind.CATEGORICAL), ("partner", Kind.CATEGORICAL), ("year", Kind.NUMERIC),
                ("month", Kind.NUMERIC), ("commodity", Kind.CATEGORICAL), ("harmonic_distance", Kind.NUMERIC),
                ("gdp_reporter", Kind.NUMERIC), ("gdp_partner", Kind.NUMERIC)]
        X = np.column_stack([rep, par, [r.year for r in records], [r.month for r in records], com,
                             [r.harmonic_distance for r in records], [r.gdp_reporter for r in records],
                             [r.gdp_partner for r in records]])
        return FeatureMatrix(cols, X, target, {"reporter": rep_cats, "partner": par_cats, "commodity": com_cats})
    n = embeddings.dimension
    try:
        rep_idx = np.array([embeddings.entity_index(r.reporter) for r in records])
        par_idx = np.array([embeddings.entity_index(r.partner) for r in records])
    except UnknownEntity:
        raise
    E = embeddings.entity_matrix
    cols = [("commodity", Kind.CATEGORICAL)] + [(f"rep_emb_{i}", Kind.NUMERIC) for i in range(n)] \
        + [(f"par_emb_{i}", Kind.NUMERIC) for i in range(n)]
    X = np.column_stack([com[:, None], E[rep_idx], E[par_idx]])
    return FeatureMatrix(cols, X, target, {"commodity": com_cats})


# -- fitted tree --------------------------------------------------------------

@dataclass(frozen=True)
class Leaf:
    prediction: float
    count: int


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float | None
    categories: frozenset[int] | None
    left: "TreeNode"
    right: "TreeNode"
    gain: float
    count: int


TreeNode = Union[Leaf, Split]


class Tree:
    """Flat-array regression tree. Node 0 is the root; ``feature == -1`` marks a leaf.

    Numeric splits send ``value <= threshold`` left. Categorical splits send
    the codes in the node's left set left and everything else, including
    codes never seen in that node, right.
    """

    def __init__(self, columns, feature, threshold, left, right, value, count, gain, cat_left):
        self.columns = list(columns)
        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.value = np.asarray(value, dtype=float)
        self.count = np.asarray(count, dtype=int)
        self.gain = np.asarray(gain, dtype=float)
        self.cat_left = dict(cat_left)
        self._build_cat_table()

    def _build_cat_table(self):
        nodes = sorted(self.cat_left)
        self._cat_slot = np.full(self.feature.size, -1, dtype=int)
        width = 1 + max((max(s) for s in self.cat_left.values() if s), default=0)
        self._cat_table = np.zeros((max(len(nodes), 1), width), dtype=bool)
        for slot, node in enumerate(nodes):
            self._cat_slot[node] = slot
            self._cat_table[slot, sorted(self.cat_left[node])] = True

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def node(self, i: int = 0) -> TreeNode:
        if self.feature[i] < 0:
            return Leaf(float(self.value[i]), int(self.count[i]))
        cats = self.cat_left.get(i)
        return Split(int(self.feature[i]), None if cats is not None else float(self.threshold[i]),
                     frozenset(cats) if cats is not None else None,
                     self.node(int(self.left[i])), self.node(int(self.right[i])),
                     float(self.gain[i]), int(self.count[i]))

    @property
    def root(self) -> TreeNode:
        return self.node(0)

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.columns):
            raise ShapeError(f"expected rows of {len(self.columns)} features, got shape {X.shape}")
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            r, nd, ff = rows[internal], node[internal], f[internal]
            vals = X[r, ff]
            slot = self._cat_slot[nd]
            is_cat = slot >= 0
            go_left = vals <= self.threshold[nd]
            if is_cat.any():
                codes = vals[is_cat].astype(int)
                ok = (codes >= 0) & (codes < self._cat_table.shape[1])
                cl = np.zeros(codes.size, dtype=bool)
                cl[ok] = self._cat_table[slot[is_cat][ok], codes[ok]]
                go_left[is_cat] = cl
            node[internal] = np.where(go_left, self.left[nd], self.right[nd])
        return self.value[node]

    def to_dict(self, i: int = 0) -> dict:
        name = self.columns[self.feature[i]][0] if self.feature[i] >= 0 else None
        if self.feature[i] < 0:
            return {"leaf": True, "prediction": float(self.value[i]), "count": int(self.count[i])}
        d = {"leaf": False, "feature": name, "gain": float(self.gain[i]), "count": int(self.count[i])}
        if i in self.cat_left:
            d["left_categories"] = sorted(int(c) for c in self.cat_left[i])
        else:
            d["threshold"] = float(self.threshold[i])
        d["left"] = self.to_dict(int(self.left[i]))
        d["right"] = self.to_dict(int(self.right[i]))
        return d


def _group_starts(node_sorted: np.ndarray) -> np.ndarray:
    """Index of the first element of each run, broadcast to every element."""
    start = np.empty(node_sorted.size, dtype=int)
    new = np.ones(node_sorted.size, dtype=bool)
    new[1:] = node_sorted[1:] != node_sorted[:-1]
    pos = np.flatnonzero(new)
    start[:] = pos[np.cumsum(new) - 1]
    return start


def fit(features: FeatureMatrix, config: DTreeConfig = DTreeConfig(), seed: int | None = None) -> Tree:
    """Greedy variance-reduction tree.

    Numeric splits are tried at midpoints between consecutive distinct values;
    categorical features are ordered by the node's per-category target mean
    and split contiguously. Ties go to the lowest feature index, then the
    lowest threshold. ``seed`` is accepted for interface symmetry; fitting is
    deterministic.
    """
    X, y = features.rows, features.target
    n, F = X.shape
    if n == 0:
        raise EmptyData("cannot fit a tree on zero rows")
    is_cat = [k is Kind.CATEGORICAL for _, k in features.columns]

    feature, threshold, left, right = [-1], [np.nan], [-1], [-1]
    value, count, gain = [float(y.mean())], [n], [0.0]
    cat_left: dict[int, frozenset] = {}

    node_of = np.zeros(n, dtype=int)
    active = np.arange(n)
    depth = 0
    while active.size and depth < config.max_depth:
        nodes = node_of[active]
        uniq, local = np.unique(nodes, return_inverse=True)
        m = uniq.size
        cnt = np.bincount(local, minlength=m).astype(float)
        mean = np.bincount(local, weights=y[active], minlength=m) / cnt
        yc = y[active] - mean[local]
        sst = np.bincount(local, weights=yc * yc, minlength=m)

        best_gain = np.full(m, -np.inf)
        best_feat = np.full(m, -1)
        best_rank = np.zeros(m, dtype=int)
        best_thr = np.full(m, np.nan)
        orders = {}
        for f in range(F):
            xv = X[active, f]
            if is_cat[f]:
                codes = xv.astype(int)
                key = local * (codes.max() + 1) + codes
                _, kinv = np.unique(key, return_inverse=True)
                kmean = np.bincount(kinv, weights=y[active]) / np.bincount(kinv)
                order = np.lexsort((codes, kmean[kinv], local))
                sortkey = codes[order]
            else:
                order = np.lexsort((xv, local))
                sortkey = xv[order]
            ls = local[order]
            starts = _group_starts(ls)
            cs = np.cumsum(yc[order])
            base = np.where(starts > 0, cs[starts - 1], 0.0)
            sl = cs - base
            nl = np.arange(order.size) - starts + 1
            N = cnt[ls]
            nr = N - nl
            valid = np.zeros(order.size, dtype=bool)
            valid[:-1] = (ls[:-1] == ls[1:]) & (sortkey[:-1] != sortkey[1:])
            valid &= (nl >= config.min_leaf) & (nr >= config.min_leaf)
            if not valid.any():
                orders[f] = (order, starts)
                continue
            pos = np.flatnonzero(valid)
            s_tot = cs[np.minimum(starts[pos] + N[pos].astype(int) - 1, order.size - 1)] - base[pos]
            slv = sl[pos]
            srv = s_tot - slv
            g = slv ** 2 / nl[pos] + srv ** 2 / nr[pos] - s_tot ** 2 / N[pos]
            grp = ls[pos]
            pick = np.lexsort((pos, -g, grp))
            first = np.ones(pick.size, dtype=bool)
            first[1:] = grp[pick][1:] != grp[pick][:-1]
            sel = pick[first]
            gsel, nsel, psel = g[sel], grp[sel], pos[sel]
            better = gsel > best_gain[nsel]
            nsel, gsel, psel = nsel[better], gsel[better], psel[better]
            best_gain[nsel] = gsel
            best_feat[nsel] = f
            best_rank[nsel] = nl[psel] - 1
            if not is_cat[f]:
                lo, hi = sortkey[psel], sortkey[psel + 1]
                mid = (lo + hi) / 2
                best_thr[nsel] = np.where((mid >= hi) | (mid < lo), lo, mid)
            orders[f] = (order, starts)

        floor = np.maximum(config.min_gain, 1e-12 * sst)
        split = (best_feat >= 0) & (best_gain > floor)
        if not split.any():
            break
        go_left = np.zeros(active.size, dtype=bool)
        for f in np.unique(best_feat[split]):
            order, starts = orders[f]
            ls = local[order]
            chose = split[ls] & (best_feat[ls] == f)
            rank = np.arange(order.size) - starts
            go_left[order[chose & (rank <= best_rank[ls])]] = True
            if is_cat[f]:
                sel = chose & (rank <= best_rank[ls])
                pairs = np.unique(np.column_stack([ls[sel], X[active[order[sel]], f].astype(int)]), axis=0)
                bounds = np.flatnonzero(np.diff(pairs[:, 0])) + 1
                for chunk in np.split(pairs, bounds):
                    cat_left[int(uniq[chunk[0, 0]])] = frozenset(int(c) for c in chunk[:, 1])
        ya = y[active]
        n_l = np.bincount(local[go_left], minlength=m)
        n_r = np.bincount(local[~go_left], minlength=m)
        s_l = np.bincount(local[go_left], weights=ya[go_left], minlength=m)
        s_r = np.bincount(local[~go_left], weights=ya[~go_left], minlength=m)
        split_ids = np.flatnonzero(split)
        child_left = np.full(m, -1)
        child_right = np.full(m, -1)
        first = len(feature)
        child_left[split_ids] = first + 2 * np.arange(split_ids.size)
        child_right[split_ids] = child_left[split_ids] + 1
        for li in split_ids:
            for nn, ss in ((n_l[li], s_l[li]), (n_r[li], s_r[li])):
                feature.append(-1); threshold.append(np.nan); left.append(-1); right.append(-1)
                value.append(float(ss / nn)); count.append(int(nn)); gain.append(0.0)
            parent = int(uniq[li])
            feature[parent] = int(best_feat[li])
            threshold[parent] = float(best_thr[li]) if not is_cat[best_feat[li]] else np.nan
            left[parent], right[parent] = int(child_left[li]), int(child_right[li])
            gain[parent] = float(best_gain[li])
        node_of[active] = np.where(split[local], np.where(go_left, child_left[local], child_right[local]),
                                   node_of[active])
        active = active[split[local]]
        depth += 1
    return Tree(features.columns, feature, threshold, left, right, value, count, gain, cat_left)


def predict(tree: Tree, row) -> float:
    row = np.asarray(row, dtype=float)
    if row.ndim != 1:
        raise ShapeError("predict takes one row; use Tree.predict_matrix for many")
    return float(tree.predict_matrix(row[None, :])[0])


def feature_importance(tree: Tree) -> dict[str, float]:
    """Total SSE reduction per feature, normalised to sum to 1 (empty for a single leaf)."""
    internal = tree.feature >= 0
    if not internal.any():
        return {}
    totals = np.bincount(tree.feature[internal], weights=tree.gain[internal], minlength=len(tree.columns))
    s = totals.sum()
    if s <= 0:
        return {}
    return {name: float(v / s) for (name, _), v in zip(tree.columns, totals)}


def write_tree_json(tree: Tree, path) -> None:
    doc = {"columns": [{"name": n, "kind": k.value} for n, k in tree.columns],
           "n_nodes": tree.n_nodes, "n_leaves": tree.n_leaves, "root": tree.to_dict()}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def write_importance_csv(importance: dict[str, float], columns: Sequence[str], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "importance"])
        for c in columns:
            w.writerow([c, repr(importance.get(c, 0.0))])


def train_test_indices(n: int, train_frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    k = int(round(train_frac * n))
    return np.sort(perm[:k]), np.sort(perm[k:])
