"""Translational embeddings trained with a margin-ranking hinge and
head-or-tail corruption, plus scoring and filtered tail ranking."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ShapeError, UnknownEntity
from .model import EmbeddingSpace, KnowledgeGraph, Norm, Triple


@dataclass(frozen=True)
class TranseConfig:
    dimension: int = 10
    margin: float = 1.0
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32
    norm: Norm = Norm.L1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm(self.norm))
        if self.dimension < 1 or self.batch_size < 1:
            raise ConfigError("dimension and batch_size must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not (self.margin > 0 and self.learning_rate > 0):
            raise ConfigError("margin and learning_rate must be positive")


@dataclass
class TrainTrace:
    epochs: list[int] = field(default_factory=list)
    mean_loss: list[float] = field(default_factory=list)
    active_terms: list[int] = field(default_factory=list)

    def __len__(self):
        return len(self.epochs)

    def append(self, epoch, loss, active):
        self.epochs.append(epoch)
        self.mean_loss.append(loss)
        self.active_terms.append(active)


def _norm_rows(x: np.ndarray, norm: Norm) -> np.ndarray:
    if norm is Norm.L1:
        return np.abs(x).sum(axis=-1)
    return np.sqrt((x * x).sum(axis=-1))


def _norm_grad(x: np.ndarray, norm: Norm) -> np.ndarray:
    """(Sub)gradient of ||x|| w.r.t. x, row-wise; zero at the origin."""
    if norm is Norm.L1:
        return np.sign(x)
    n = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    return np.divide(x, n, out=np.zeros_like(x), where=n > 0)


def distance(h, l, t, norm=Norm.L1) -> float:
    h, l, t = (np.asarray(v, dtype=float) for v in (h, l, t))
    if not (h.shape == l.shape == t.shape):
        raise ShapeError(f"vector shapes differ: {h.shape}, {l.shape}, {t.shape}")
    return float(_norm_rows(h + l - t, Norm(norm)))


def corrupt(triple: Triple, kg: KnowledgeGraph, rng: np.random.Generator) -> Triple:
    """Replace the head (p = 1/2) or else the tail by a different uniform entity."""
    n = len(kg.entities)
    if n < 2:
        raise ValueError("corruption needs at least two entities")
    head_side = rng.random() < 0.5
    orig = triple.head if head_side else triple.tail
    j = int(rng.integers(n - 1))
    if j >= orig.index:
        j += 1
    new = kg.entities[j]
    if head_side:
        return Triple(new, triple.relation, triple.tail)
    return Triple(triple.head, triple.relation, new)


def margin_loss(pos: Triple, neg: Triple, space: EmbeddingSpace, gamma: float) -> float:
    d_pos = distance(space.entity(pos.head), space.relation(pos.relation), space.entity(pos.tail), space.norm)
    d_neg = distance(space.entity(neg.head), space.relation(neg.relation), space.entity(neg.tail), space.norm)
    return max(0.0, gamma + d_pos - d_neg)


def margin_loss_grad(h, l, t, h_neg, t_neg, gamma: float, norm=Norm.L1):
    """Hinge value and its (sub)gradients w.r.t. (h, l, t, h', t') with the
    corrupted triple sharing the relation vector ``l``."""
    norm = Norm(norm)
    rp = h + l - t
    rn = h_neg + l - t_neg
    value = gamma + float(_norm_rows(rp, norm)) - float(_norm_rows(rn, norm))
    if value <= 0:
        z = np.zeros_like(rp)
        return 0.0, (z, z, z, z, z)
    gp, gn = _norm_grad(rp, norm), _norm_grad(rn, norm)
    return value, (gp, gp - gn, -gp, -gn, gn)


def init_space(kg: KnowledgeGraph, config: TranseConfig, rng: np.random.Generator) -> EmbeddingSpace:
    """Uniform in +-6/sqrt(N); relations normalised once, entities unit length."""
    n_dim = config.dimension
    bound = 6.0 / math.sqrt(n_dim)
    ent = rng.uniform(-bound, bound, size=(len(kg.entities), n_dim))
    rel = rng.uniform(-bound, bound, size=(len(kg.relations), n_dim))
    rel /= np.linalg.norm(rel, axis=1, keepdims=True)
    ent /= np.linalg.norm(ent, axis=1, keepdims=True)
    return EmbeddingSpace(n_dim, tuple(e.label for e in kg.entities), ent,
                          tuple(r.name for r in kg.relations), rel, config.norm)


def train(kg: KnowledgeGraph, config: TranseConfig = TranseConfig()) -> tuple[EmbeddingSpace, TrainTrace]:
    """Mini-batch SGD on the margin loss, one corrupted triple per positive.

    Gradients are summed over the batch; after every epoch entity vectors are
    projected back to the unit L2 sphere. Relations are left free.
    """
    if not kg.triples:
        raise ValueError("cannot train on an empty triple set")
    if len(kg.entities) < 2:
        raise ValueError("need at least two entities")
    rng = np.random.default_rng(config.seed)
    space = init_space(kg, config, rng)
    trace = TrainTrace()
    E, R = space.entity_matrix, space.relation_matrix
    heads = np.array([space.entity_index(t.head) for t in kg.triples])
    rels = np.array([space.relation_index(t.relation) for t in kg.triples])
    tails = np.array([space.entity_index(t.tail) for t in kg.triples])
    n_ent, m = E.shape[0], heads.size
    gamma, lr, norm = config.margin, config.learning_rate, config.norm

    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(m)
        loss_sum, active_total = 0.0, 0
        for start in range(0, m, config.batch_size):
            idx = perm[start:start + config.batch_size]
            h, r, t = heads[idx], rels[idx], tails[idx]
            head_side = rng.random(idx.size) < 0.5
            repl = rng.integers(n_ent - 1, size=idx.size)
            orig = np.where(head_side, h, t)
            repl = repl + (repl >= orig)
            h_neg = np.where(head_side, repl, h)
            t_neg = np.where(head_side, t, repl)

            rp = E[h] + R[r] - E[t]
            rn = E[h_neg] + R[r] - E[t_neg]
            hinge = gamma + _norm_rows(rp, norm) - _norm_rows(rn, norm)
            active = hinge > 0
            loss_sum += float(hinge[active].sum())
            active_total += int(active.sum())
            if not active.any():
                continue
            gp = _norm_grad(rp[active], norm)
            gn = _norm_grad(rn[active], norm)
            gE = np.zeros_like(E)
            gR = np.zeros_like(R)
            np.add.at(gE, h[active], gp)
            np.add.at(gE, t[active], -gp)
            np.add.at(gE, h_neg[active], -gn)
            np.add.at(gE, t_neg[active], gn)
            np.add.at(gR, r[active], gp - gn)
            E -= lr * gE
            R -= lr * gR
        E /= np.linalg.norm(E, axis=1, keepdims=True)
        trace.append(epoch, loss_sum / m, active_total)
    return space, trace


def score_triple(t: Triple, space: EmbeddingSpace) -> float:
    return -distance(space.entity(t.head), space.relation(t.relation), space.entity(t.tail), space.norm)


def rank_tails(head, relation, space: EmbeddingSpace, filter: Iterable[tuple[str, str, str]] | None = None,
               target=None) -> list[str]:
    """Candidate tails by descending score (ties by label), head excluded.

    With ``filter`` (a set of (head, relation, tail) label triples), known true
    tails other than ``target`` are removed.
    """
    h_label = getattr(head, "label", head)
    r_name = getattr(relation, "name", relation)
    q = space.entity(h_label) + space.relation(r_name)
    d = _norm_rows(q[None, :] - space.entity_matrix, space.norm)
    target = getattr(target, "label", target)
    known = set()
    if filter is not None:
        known = {tl for (hl, rn, tl) in filter if hl == h_label and rn == r_name and tl != target}
    cands = [(float(d[i]), lab) for i, lab in enumerate(space.entity_labels)
             if lab != h_label and lab not in known]
    cands.sort()
    return [lab for _, lab in cands]


@dataclass
class LinkMetrics:
    hits_at_1: float
    hits_at_3: float
    hits_at_10: float
    mean_rank: float
    mrr: float
    queries: int


def evaluate_links(queries: Sequence[Triple], space: EmbeddingSpace,
                   known: Iterable[Triple] | None = None) -> LinkMetrics:
    """Filtered tail-prediction metrics over ``queries``."""
    known_set = {t.as_labels() for t in (known if known is not None else queries)}
    ranks = []
    for q in queries:
        ranked = rank_tails(q.head, q.relation, space, known_set, target=q.tail)
        ranks.append(ranked.index(q.tail.label) + 1)
    r = np.asarray(ranks, dtype=float)
    if r.size == 0:
        raise ValueError("no queries")
    return LinkMetrics(float((r <= 1).mean()), float((r <= 3).mean()), float((r <= 10).mean()),
                       float(r.mean()), float((1.0 / r).mean()), int(r.size))


def write_embeddings_csv(space: EmbeddingSpace, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity_or_relation", "kind"] + [f"v{i}" for i in range(space.dimension)])
        for lab, vec in zip(space.entity_labels, space.entity_matrix):
            w.writerow([lab, "entity"] + [repr(float(v)) for v in vec])
        for name, vec in zip(space.relation_names, space.relation_matrix):
            w.writerow([name, "relation"] + [repr(float(v)) for v in vec])


def load_embeddings_csv(path, norm=Norm.L1) -> EmbeddingSpace:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    dim = len(header) - 2
    ents = [r for r in rows if r[1] == "entity"]
    rels = [r for r in rows if r[1] == "relation"]
    return EmbeddingSpace(dim, tuple(r[0] for r in ents), np.array([[float(v) for v in r[2:]] for r in ents]),
                          tuple(r[0] for r in rels),
                          np.array([[float(v) for v in r[2:]] for r in rels]).reshape(-1, dim), norm)


def write_trace_csv(trace: TrainTrace, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss", "active_terms"])
        for e, l, a in zip(trace.epochs, trace.mean_loss, trace.active_terms):
            w.writerow([e, repr(l), a])
