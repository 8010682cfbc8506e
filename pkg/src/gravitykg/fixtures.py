"""Small deterministic graphs used by tests, acceptance checks and scripts."""
from __future__ import annotations

from itertools import combinations

from .clustering import kmeans_1d
from .kg import band_map_from, build_kg
from .model import EntityRegistry, GravityScore, KnowledgeGraph, TradeRecord


def two_clique_scores(n: int = 12, strong: float = 1000.0, weak: float = 1.0, year: int = 2019) -> list[GravityScore]:
    """Two disconnected cliques of ``n // 2`` countries.

    Pairs inside the first clique attract strongly, pairs inside the second
    weakly; cross-clique pairs never trade and so carry no score.
    """
    labels = [f"A{i:02d}" for i in range(n // 2)] + [f"B{i:02d}" for i in range(n - n // 2)]
    reg = EntityRegistry(labels)
    scores = []
    for group, value in ((labels[: n // 2], strong), (labels[n // 2:], weak)):
        for a, b in combinations(group, 2):
            scores.append(GravityScore(year, (reg.get(a), reg.get(b)), value))
    return scores


def two_clique_kg(n: int = 12, seed: int = 7) -> KnowledgeGraph:
    """KG from :func:`two_clique_scores` banded by k-means (k=2) on log scores."""
    import math

    scores = two_clique_scores(n)
    vals = [math.log(s.score) for s in scores]
    result = kmeans_1d(vals, 2, seed=seed)
    return build_kg(scores, band_map_from(result, vals, log_scores=True))


def clique_of(label: str) -> str:
    return label[0]


def two_clique_records(n: int = 12, gdp: float = 10.0, year: int = 2019) -> list[TradeRecord]:
    """Trade records whose gravity scores reproduce :func:`two_clique_scores`:
    equal GDPs everywhere, short distances inside the first clique and long
    ones inside the second. One monthly row per direction."""
    out = []
    for s in two_clique_scores(n, year=year):
        a, b = s.pair
        d = gdp * gdp / s.score
        for rep, par in ((a, b), (b, a)):
            out.append(TradeRecord(year, 1, rep, par, "010101", 1.0, gdp, gdp, d))
    return out
