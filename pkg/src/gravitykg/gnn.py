"""One-layer mean-aggregation graph network with a Hadamard edge scorer,
trained with MSE on sigmoid outputs for country-pair link prediction.

    h_v = relu(W_self x_v + W_nbr mean_{u in N(v)} x_u + b)
    s_ij = sigmoid(w . (h_i * h_j) + c)

Neighbourhoods come only from the training positives.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, InsufficientNegatives, ShapeError
from .evaluation import ConfusionMatrix, confusion
from .model import EmbeddingSpace, KnowledgeGraph, TradeRecord


class NodeFeatures(str, Enum):
    BASIC = "basic"
    EMBEDDING = "embedding"


@dataclass(frozen=True)
class GnnConfig:
    hidden_dim: int = 16
    epochs: int = 300
    learning_rate: float = 0.05
    negative_ratio: float = 1.0
    threshold: float = 0.5
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.hidden_dim < 1 or self.epochs < 0:
            raise ConfigError("hidden_dim must be positive and epochs >= 0")
        if not (self.learning_rate > 0 and self.negative_ratio > 0):
            raise ConfigError("learning_rate and negative_ratio must be positive")
        if self.optimizer not in ("gd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EdgeDataset:
    nodes: list[str]
    node_features: np.ndarray
    positive_edges: list[tuple[int, int]]
    negative_edges: list[tuple[int, int]]
    neighbor_edges: list[tuple[int, int]] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.node_features = np.asarray(self.node_features, dtype=float)
        if self.node_features.shape[0] != len(self.nodes):
            raise ShapeError("one feature row per node required")
        if set(map(_undirected, self.positive_edges)) & set(map(_undirected, self.negative_edges)):
            raise ValueError("positive and negative edges overlap")

    @property
    def edges(self) -> np.ndarray:
        return np.array(self.positive_edges + self.negative_edges, dtype=int).reshape(-1, 2)

    @property
    def labels(self) -> np.ndarray:
        return np.array([1.0] * len(self.positive_edges) + [0.0] * len(self.negative_edges))

    def mean_operator(self) -> np.ndarray:
        """Row-normalised adjacency of the neighbour graph (zero rows for isolated nodes)."""
        n = len(self.nodes)
        A = np.zeros((n, n))
        for i, j in self.neighbor_edges:
            A[i, j] = A[j, i] = 1.0
        deg = A.sum(axis=1, keepdims=True)
        return np.divide(A, deg, out=np.zeros_like(A), where=deg > 0)


def _undirected(e):
    return tuple(sorted(e))


def _basic_node_features(nodes: Sequence[str], neighbors: Sequence[tuple[int, int]],
                         records: Sequence[TradeRecord]) -> np.ndarray:
    idx = {lab: i for i, lab in enumerate(nodes)}
    n = len(nodes)
    gdp_sum, gdp_cnt = np.zeros(n), np.zeros(n)
    dist: dict[tuple[int, int], list[float]] = {}
    for r in records:
        i, j = idx.get(r.reporter.label), idx.get(r.partner.label)
        if i is None or j is None:
            continue
        gdp_sum[i] += r.gdp_reporter
        gdp_cnt[i] += 1
        gdp_sum[j] += r.gdp_partner
        gdp_cnt[j] += 1
        dist.setdefault(_undirected((i, j)), []).append(r.harmonic_distance)
    if (gdp_cnt == 0).any():
        missing = [nodes[i] for i in np.flatnonzero(gdp_cnt == 0)]
        raise ValueError(f"no GDP observations for {missing}")
    log_gdp = np.log(gdp_sum / gdp_cnt)
    pair_dist = {k: float(np.mean(v)) for k, v in dist.items()}
    fallback = float(np.mean(list(pair_dist.values()))) if pair_dist else 1.0
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for i, j in neighbors:
        nbrs[i].append(j)
        nbrs[j].append(i)
    mean_dist = np.array([np.mean([pair_dist.get(_undirected((v, u)), fallback) for u in nb]) if nb else fallback
                          for v, nb in enumerate(nbrs)])
    degree = np.array([len(nb) for nb in nbrs], dtype=float)
    X = np.column_stack([log_gdp, np.log(mean_dist), degree])
    mu, sd = X.mean(axis=0), X.std(axis=0)
    constant = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
    return np.where(constant, 0.0, (X - mu) / np.where(constant, 1.0, sd))


def make_edge_dataset(kg: KnowledgeGraph, features=NodeFeatures.BASIC, embeddings: EmbeddingSpace | None = None,
                      records: Sequence[TradeRecord] | None = None, *, negative_ratio: float = 1.0,
                      seed: int = 0, neighbor_kg: KnowledgeGraph | None = None,
                      known_pairs: Sequence[tuple[str, str]] | None = None,
                      exclude: Sequence[tuple[str, str]] = ()) -> EdgeDataset:
    """Positives are the undirected pairs of ``kg``; negatives are sampled
    uniformly from pairs absent from ``known_pairs`` (default: ``kg``'s pairs)
    and not in ``exclude``. Aggregation uses ``neighbor_kg`` (default ``kg``)."""
    features = NodeFeatures(features)
    nodes = [e.label for e in kg.entities]
    idx = {lab: i for i, lab in enumerate(nodes)}
    pos = [(idx[a], idx[b]) for a, b in kg.pairs()]
    known = {tuple(sorted(p)) for p in (known_pairs if known_pairs is not None else kg.pairs())}
    banned = known | {tuple(sorted(p)) for p in exclude}
    absent = [(i, j) for i, j in combinations(range(len(nodes)), 2) if (nodes[i], nodes[j]) not in banned]
    n_neg = int(round(negative_ratio * len(pos)))
    if n_neg > len(absent) or (n_neg > 0 and not absent):
        raise InsufficientNegatives(f"need {n_neg} negative pairs, only {len(absent)} absent pairs available")
    rng = np.random.default_rng(seed)
    neg = [absent[k] for k in sorted(rng.choice(len(absent), size=n_neg, replace=False))] if n_neg else []
    nb_kg = neighbor_kg if neighbor_kg is not None else kg
    neighbors = [(idx[a], idx[b]) for a, b in nb_kg.pairs() if a in idx and b in idx]

    if features is NodeFeatures.EMBEDDING:
        if embeddings is None:
            raise ValueError("embedding features need a trained EmbeddingSpace")
        X = np.stack([embeddings.entity(lab) for lab in nodes])
        names = [f"emb_{k}" for k in range(embeddings.dimension)]
    else:
        if records is None:
            raise ValueError("basic features need trade records")
        X = _basic_node_features(nodes, neighbors, records)
        names = ["log_gdp", "log_mean_partner_distance", "degree"]
    return EdgeDataset(nodes, X, pos, neg, neighbors, names)


@dataclass
class GnnParams:
    W_self: np.ndarray
    W_nbr: np.ndarray
    b: np.ndarray
    w: np.ndarray
    c: float

    @classmethod
    def zeros(cls, n_features: int, hidden: int) -> "GnnParams":
        return cls(np.zeros((hidden, n_features)), np.zeros((hidden, n_features)), np.zeros(hidden),
                   np.zeros(hidden), 0.0)

    @classmethod
    def init(cls, n_features: int, hidden: int, rng: np.random.Generator) -> "GnnParams":
        s_in = 1.0 / math.sqrt(n_features)
        return cls(rng.normal(0, s_in, (hidden, n_features)), rng.normal(0, s_in, (hidden, n_features)),
                   np.zeros(hidden), rng.normal(0, 1.0 / math.sqrt(hidden), hidden), 0.0)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.W_self.ravel(), self.W_nbr.ravel(), self.b, self.w, [self.c]])

    def from_vector(self, v: np.ndarray) -> "GnnParams":
        h, f = self.W_self.shape
        k = h * f
        return GnnParams(v[:k].reshape(h, f).copy(), v[k:2 * k].reshape(h, f).copy(), v[2 * k:2 * k + h].copy(),
                         v[2 * k + h:2 * k + 2 * h].copy(), float(v[-1]))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _hidden(X, M, p: GnnParams):
    Z = X @ p.W_self.T + M @ p.W_nbr.T + p.b
    return Z, np.maximum(Z, 0.0)


def forward(dataset: EdgeDataset, params: GnnParams, edges: np.ndarray | None = None) -> np.ndarray:
    X = dataset.node_features
    if params.W_self.shape[1] != X.shape[1] or params.W_nbr.shape != params.W_self.shape \
            or params.w.shape != (params.W_self.shape[0],):
        raise ShapeError("parameter shapes do not match the dataset features")
    edges = dataset.edges if edges is None else np.asarray(edges, dtype=int).reshape(-1, 2)
    _, H = _hidden(X, dataset.mean_operator() @ X, params)
    return _sigmoid((H[edges[:, 0]] * H[edges[:, 1]]) @ params.w + params.c)


def mse_and_grad(dataset: EdgeDataset, params: GnnParams, M: np.ndarray | None = None):
    """MSE over all labelled edges and its gradient as a GnnParams."""
    X = dataset.node_features
    M = dataset.mean_operator() @ X if M is None else M
    E = dataset.edges
    y = dataset.labels
    Z, H = _hidden(X, M, params)
    prod = H[E[:, 0]] * H[E[:, 1]]
    s = _sigmoid(prod @ params.w + params.c)
    err = s - y
    loss = float(np.mean(err ** 2))
    dq = 2.0 * err / y.size * s * (1.0 - s)
    dw = prod.T @ dq
    dc = float(dq.sum())
    dH = np.zeros_like(H)
    np.add.at(dH, E[:, 0], dq[:, None] * params.w[None, :] * H[E[:, 1]])
    np.add.at(dH, E[:, 1], dq[:, None] * params.w[None, :] * H[E[:, 0]])
    dZ = dH * (Z > 0)
    grad = GnnParams(dZ.T @ X, dZ.T @ M, dZ.sum(axis=0), dw, dc)
    return loss, grad


def train_gnn(dataset: EdgeDataset, config: GnnConfig = GnnConfig()) -> tuple[GnnParams, list[float]]:
    """Full-batch training; ``trace[e]`` is the MSE before update ``e``."""
    if not dataset.positive_edges or not dataset.negative_edges:
        raise ValueError("need both positive and negative edges")
    rng = np.random.default_rng(config.seed)
    params = GnnParams.init(dataset.node_features.shape[1], config.hidden_dim, rng)
    M = dataset.mean_operator() @ dataset.node_features
    theta = params.to_vector()
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    trace = []
    for epoch in range(1, config.epochs + 1):
        loss, grad = mse_and_grad(dataset, params.from_vector(theta), M)
        trace.append(loss)
        g = grad.to_vector()
        if config.optimizer == "gd":
            theta = theta - config.learning_rate * g
        else:
            m1 = b1 * m1 + (1 - b1) * g
            m2 = b2 * m2 + (1 - b2) * g * g
            step = m1 / (1 - b1 ** epoch) / (np.sqrt(m2 / (1 - b2 ** epoch)) + eps)
            theta = theta - config.learning_rate * step
    return params.from_vector(theta), trace


def final_mse(dataset: EdgeDataset, params: GnnParams) -> float:
    return mse_and_grad(dataset, params)[0]


def evaluate_gnn(params: GnnParams, dataset: EdgeDataset, threshold: float = 0.5) -> ConfusionMatrix:
    return confusion(dataset.labels.astype(int), forward(dataset, params), threshold)


def write_gnn_trace(trace: Sequence[float], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mse"])
        for e, v in enumerate(trace, 1):
            w.writerow([e, repr(float(v))])


def write_gnn_report(cm: ConfusionMatrix, config: GnnConfig, path, extra: dict | None = None) -> None:
    doc = {"confusion": cm.to_dict(), "accuracy": cm.accuracy, "config": asdict(config)}
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
