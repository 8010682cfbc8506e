"""Gravity bands -> triple-based knowledge graph, train/test split and TSV I/O."""
from __future__ import annotations

import bisect
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import ClusteringResult, ClusterMethod
from .errors import DomainError, EmptyGraph, ShapeError
from .model import EntityRegistry, GravityScore, KnowledgeGraph, RelationLabel, Triple, band_name

log = logging.getLogger(__name__)

_CENTER_BASED = (ClusterMethod.KMEANS, ClusterMethod.GMM, ClusterMethod.MEANSHIFT)


@dataclass(frozen=True)
class BandMap:
    """Half-open score intervals; a score equal to a boundary belongs to the upper band."""

    thresholds: tuple[float, ...]
    labels: tuple[RelationLabel, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.thresholds) + 1:
            raise ShapeError("need exactly one more label than thresholds")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("band thresholds must be strictly ascending")

    @classmethod
    def from_thresholds(cls, thresholds: Sequence[float]) -> "BandMap":
        return cls(tuple(float(t) for t in thresholds),
                   tuple(RelationLabel.for_band(i) for i in range(len(thresholds) + 1)))


def band_of(score: float, bands: BandMap) -> RelationLabel:
    if math.isnan(score):
        raise DomainError("NaN gravity score")
    return bands.labels[bisect.bisect_right(bands.thresholds, score)]


def band_map_from(result: ClusteringResult, values: Sequence[float], log_scores: bool = False) -> BandMap:
    """Band boundaries reproducing ``result`` from thresholds alone.

    Centre-based methods use midpoints between adjacent centres; single
    linkage and DBSCAN use midpoints of the gap between adjacent clusters.
    ``values`` are the (possibly logged) numbers that were clustered; with
    ``log_scores`` the thresholds are mapped back to raw gravity units.
    """
    v = np.asarray(values, dtype=float)
    if result.k < 1:
        raise EmptyGraph("clustering produced no bands")
    if len(result.assignments) != v.size:
        raise ShapeError("every score must be clustered")
    cuts = []
    for c in range(result.k - 1):
        lo_c, hi_c = result.centers[c], result.centers[c + 1]
        mid = (lo_c + hi_c) / 2
        if result.method not in _CENTER_BASED:
            lower = v[result.assignments == c]
            upper = v[result.assignments == c + 1]
            if lower.size and upper.size and lower.max() < upper.min():
                mid = (lower.max() + upper.min()) / 2
        cuts.append(mid)
    if log_scores:
        cuts = [math.exp(t) for t in cuts]
    cuts = sorted(set(cuts))
    return BandMap.from_thresholds(cuts)


def build_kg(scores: Sequence[GravityScore], bands: BandMap | ClusteringResult, *,
             log_scores: bool = True, directed_single: bool = False) -> KnowledgeGraph:
    """Emit <a, band, b> and <b, band, a> for every scored pair (only the first
    with ``directed_single``)."""
    if not scores:
        raise EmptyGraph("no gravity scores")
    if isinstance(bands, ClusteringResult):
        vals = [math.log(s.score) if log_scores else s.score for s in scores]
        bands = band_map_from(bands, vals, log_scores=log_scores)
    registry = EntityRegistry(sorted({e.label for s in scores for e in s.pair}))
    triples = []
    for s in scores:
        rel = band_of(s.score, bands)
        a, b = (registry.get(e.label) for e in s.pair)
        if a == b:
            continue
        triples.append(Triple(a, rel, b))
        if not directed_single:
            triples.append(Triple(b, rel, a))
    return KnowledgeGraph.from_triples(triples)


@dataclass
class SplitReport:
    train_pairs: int = 0
    test_pairs: int = 0
    moved_to_train: list[tuple[str, str]] = field(default_factory=list)


def _pair_key(t: Triple) -> tuple[str, str]:
    return tuple(sorted((t.head.label, t.tail.label)))


def split_triples(kg: KnowledgeGraph, train_frac: float = 0.8, seed: int = 0,
                  report: SplitReport | None = None) -> tuple[KnowledgeGraph, KnowledgeGraph]:
    """Random split by unordered pair so both directions land on the same side.

    Test pairs whose entity or relation is absent from train are moved to
    train (listed in ``report.moved_to_train``).
    """
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must lie in (0, 1)")
    report = report if report is not None else SplitReport()
    by_pair: dict[tuple[str, str], list[Triple]] = {}
    for t in kg.triples:
        by_pair.setdefault(_pair_key(t), []).append(t)
    pairs = sorted(by_pair)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(pairs))
    n_train = int(round(train_frac * len(pairs)))
    train = [pairs[i] for i in sorted(perm[:n_train])]
    test = [pairs[i] for i in sorted(perm[n_train:])]

    seen_ent = {e for p in train for e in p}
    seen_rel = {t.relation for p in train for t in by_pair[p]}
    changed = True
    while changed:
        changed = False
        keep = []
        for p in test:
            rels = {t.relation for t in by_pair[p]}
            if not (set(p) <= seen_ent and rels <= seen_rel):
                train.append(p)
                seen_ent.update(p)
                seen_rel.update(rels)
                report.moved_to_train.append(p)
                changed = True
            else:
                keep.append(p)
        test = keep
    report.train_pairs, report.test_pairs = len(train), len(test)
    if report.moved_to_train:
        log.info("split: %d test pairs moved to train for coverage", len(report.moved_to_train))
    mk = lambda ps: KnowledgeGraph.from_triples([t for p in sorted(ps) for t in by_pair[p]], kg.entities)
    return mk(train), mk(test)


def write_kg_tsv(kg: KnowledgeGraph, path) -> None:
    lines = sorted("\t".join(t.as_labels()) for t in kg.triples)
    Path(path).write_text("".join(l + "\n" for l in lines), encoding="utf-8")


def _ordinal(name: str, fallback: int) -> int:
    prefix = band_name(0)[:-1]
    if name.startswith(prefix) and name[len(prefix):].isdigit():
        return int(name[len(prefix):])
    return fallback


def load_kg_tsv(path, entities: Sequence[str] = ()) -> KnowledgeGraph:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    rows = [l.split("\t") for l in path.read_text(encoding="utf-8").splitlines() if l.strip()]
    for i, r in enumerate(rows, 1):
        if len(r) != 3:
            raise ValueError(f"{path}:{i}: expected head<TAB>relation<TAB>tail")
    names = sorted({r[1] for r in rows})
    rels = {n: RelationLabel(n, _ordinal(n, i)) for i, n in enumerate(names)}
    registry = EntityRegistry(sorted({r[0] for r in rows} | {r[2] for r in rows} | set(entities)))
    return KnowledgeGraph.from_triples(
        [Triple(registry.get(h), rels[r], registry.get(t)) for h, r, t in rows], tuple(registry))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def bands_document(result: ClusteringResult, bands: BandMap, log_scores: bool) -> dict:
    return {
        "method": result.method.value,
        "params": _jsonable(result.params),
        "log_scores": log_scores,
        "k": result.k,
        "centers": list(result.centers),
        "noise_count": len(result.noise_indices),
        "thresholds": list(bands.thresholds),
        "bands": [{"label": lab.name, "ordinal": lab.band_ordinal,
                   "min_score": bands.thresholds[i - 1] if i > 0 else None,
                   "max_score_exclusive": bands.thresholds[i] if i < len(bands.thresholds) else None}
                  for i, lab in enumerate(bands.labels)],
    }


def write_bands_json(result: ClusteringResult, bands: BandMap, log_scores: bool, path) -> None:
    Path(path).write_text(json.dumps(bands_document(result, bands, log_scores), indent=2) + "\n")


def load_bands_json(path) -> BandMap:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    doc = json.loads(path.read_text())
    labels = tuple(RelationLabel(b["label"], b["ordinal"]) for b in doc["bands"])
    return BandMap(tuple(doc["thresholds"]), labels)
