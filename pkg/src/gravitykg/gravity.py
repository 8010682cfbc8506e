"""Pairwise gravity attraction G * M_i * M_j / D_ij**p from trade covariates."""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import DomainError, EmptyData, SingularDistance
from .model import EntityId, EntityRegistry, GravityScore, TradeRecord

log = logging.getLogger(__name__)

SCORE_COLUMNS = ("year", "country_a", "country_b", "score")


@dataclass(frozen=True)
class GravityParams:
    constant_G: float = 1.0
    mass_field: str = "GDP"
    aggregation: str = "YearMean"
    distance_exponent: float = 1.0

    def __post_init__(self):
        if not self.constant_G > 0:
            raise DomainError("constant_G must be positive")
        if self.mass_field != "GDP" or self.aggregation != "YearMean":
            raise DomainError("only GDP masses aggregated by yearly mean are supported")


def gravity_score(m_i: float, m_j: float, d_ij: float, G: float = 1.0, distance_exponent: float = 1.0) -> float:
    if d_ij == 0:
        raise SingularDistance("distance is zero")
    if not (m_i > 0 and m_j > 0):
        raise DomainError(f"masses must be positive, got {m_i}, {m_j}")
    if not (d_ij > 0 and G > 0):
        raise DomainError(f"distance and G must be positive, got {d_ij}, {G}")
    # masses multiplied first so the result is bit-symmetric in (i, j)
    if distance_exponent == 1.0:
        return G * (m_i * m_j) / d_ij
    return G * (m_i * m_j) / d_ij ** distance_exponent


def score_all_pairs(records: Sequence[TradeRecord], params: GravityParams = GravityParams()) -> list[GravityScore]:
    """One score per unordered country pair per year.

    Masses are each country's mean GDP over the year's records (as reporter or
    partner); the distance is the mean harmonic distance observed for the pair.
    """
    if not records:
        raise EmptyData("no trade records to score")
    gdp = defaultdict(list)
    dist = defaultdict(list)
    for r in records:
        gdp[(r.year, r.reporter.label)].append(r.gdp_reporter)
        gdp[(r.year, r.partner.label)].append(r.gdp_partner)
        a, b = sorted((r.reporter.label, r.partner.label))
        dist[(r.year, a, b)].append(r.harmonic_distance)

    registry = EntityRegistry(sorted({k[1] for k in gdp}))
    out = []
    for (year, a, b), ds in sorted(dist.items()):
        ma = math.fsum(gdp[(year, a)]) / len(gdp[(year, a)])
        mb = math.fsum(gdp[(year, b)]) / len(gdp[(year, b)])
        d = math.fsum(ds) / len(ds)
        s = gravity_score(ma, mb, d, params.constant_G, params.distance_exponent)
        out.append(GravityScore(year, (registry.get(a), registry.get(b)), s, params.constant_G))
    return out


def write_scores_csv(scores: Sequence[GravityScore], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for s in scores:
            w.writerow([s.year, s.pair[0].label, s.pair[1].label, repr(s.score)])


def load_scores_csv(path, constant_G: float = 1.0) -> list[GravityScore]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    registry = EntityRegistry(sorted({r["country_a"] for r in rows} | {r["country_b"] for r in rows}))
    return [GravityScore(int(r["year"]), (registry.get(r["country_a"]), registry.get(r["country_b"])),
                         float(r["score"]), constant_G) for r in rows]
