"""Trade/gravity CSV parsing, covariate join, log transforms and a seeded
synthetic dataset generator with a planted gravity signal."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AmbiguousCovariates, ConfigError, DomainError, RowError, SchemaError
from .model import EntityRegistry, TradeRecord
from .seeding import rng_for

log = logging.getLogger(__name__)

TRADE_COLUMNS = ("year", "month", "reporter", "partner", "commodity", "flow", "trade_value")
GRAVITY_COLUMNS = ("year", "reporter", "partner", "gdp_reporter", "gdp_partner", "harmonic_distance")
RECORD_COLUMNS = ("year", "month", "reporter", "partner", "commodity", "trade_value",
                  "gdp_reporter", "gdp_partner", "harmonic_distance")
LOG_FIELDS = ("trade_value", "gdp_reporter", "gdp_partner", "harmonic_distance")

_HS6 = re.compile(r"^\d{6}$")


class Flow(str, Enum):
    EXPORTS = "Exports"
    IMPORTS = "Imports"

    @classmethod
    def parse(cls, value) -> "Flow":
        if isinstance(value, cls):
            return value
        for f in cls:
            if f.value.lower() == str(value).strip().lower():
                return f
        raise ValueError(f"unknown flow {value!r}")


@dataclass(frozen=True)
class TradeRow:
    year: int
    month: int
    reporter: str
    partner: str
    commodity: str
    flow: Flow
    trade_value: float


@dataclass(frozen=True)
class GravityRow:
    year: int
    reporter: str
    partner: str
    gdp_reporter: float
    gdp_partner: float
    harmonic_distance: float


@dataclass
class DatasetConfig:
    trade_path: Path
    gravity_path: Path
    years: list[int] | None = None
    flow: Flow = Flow.EXPORTS
    log_transform: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.years is not None and not self.years:
            raise ConfigError("years must be non-empty when given")
        self.flow = Flow.parse(self.flow)


@dataclass
class LoadReport:
    """Rows that were rejected (non-strict mode) or filtered out."""

    malformed: list[tuple[int, str]] = field(default_factory=list)
    filtered: int = 0
    kept: int = 0


@dataclass
class JoinSummary:
    matched: int = 0
    unmatched: int = 0
    unmatched_keys: list[tuple[int, str, str]] = field(default_factory=list)


def _open_csv(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return path.open(newline="", encoding="utf-8")


def _check_header(header, expected, path):
    if header is None:
        raise SchemaError(f"{path}: missing header row")
    got = [h.strip() for h in header]
    if got != list(expected):
        raise SchemaError(f"{path}: header {got} does not match {list(expected)}")


def _parse_trade(rec: list[str], line: int) -> TradeRow:
    if len(rec) != len(TRADE_COLUMNS):
        raise RowError(line, f"expected {len(TRADE_COLUMNS)} fields, got {len(rec)}")
    year, month, rep, par, com, flow, value = (x.strip() for x in rec)
    try:
        year_i, month_i = int(year), int(month)
    except ValueError:
        raise RowError(line, f"non-integer year/month {year!r}/{month!r}") from None
    if not 1 <= month_i <= 12:
        raise RowError(line, f"month {month_i} outside [1, 12]")
    try:
        v = float(value)
    except ValueError:
        raise RowError(line, f"non-numeric trade_value {value!r}") from None
    if not (math.isfinite(v) and v >= 0):
        raise RowError(line, f"trade_value must be finite and >= 0, got {value!r}")
    if not rep or not par:
        raise RowError(line, "empty reporter/partner code")
    if rep == par:
        raise RowError(line, f"reporter equals partner ({rep})")
    if not _HS6.match(com):
        raise RowError(line, f"commodity {com!r} is not a 6-digit HS code")
    try:
        f = Flow.parse(flow)
    except ValueError:
        raise RowError(line, f"unknown flow {flow!r}") from None
    return TradeRow(year_i, month_i, rep, par, com, f, v)


def load_trade_csv(path, years: Iterable[int] | None = None, flow=Flow.EXPORTS,
                   strict: bool = True, report: LoadReport | None = None) -> list[TradeRow]:
    """Read a trade CSV, keeping rows in the requested years and flow.

    In strict mode the first malformed row raises :class:`RowError`; otherwise
    malformed rows are collected into ``report`` and logged.
    """
    years = None if years is None else set(years)
    flow = Flow.parse(flow)
    report = report if report is not None else LoadReport()
    out = []
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), TRADE_COLUMNS, path)
        for rec in reader:
            line = reader.line_num
            if not rec:
                continue
            try:
                row = _parse_trade(rec, line)
            except RowError as e:
                if strict:
                    raise
                report.malformed.append((line, str(e)))
                continue
            if (years is not None and row.year not in years) or row.flow is not flow:
                report.filtered += 1
                continue
            out.append(row)
    report.kept = len(out)
    if report.malformed:
        log.warning("%s: %d malformed rows skipped", path, len(report.malformed))
    return out


def load_gravity_csv(path, years: Iterable[int] | None = None) -> list[GravityRow]:
    years = None if years is None else set(years)
    out = []
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), GRAVITY_COLUMNS, path)
        for rec in reader:
            line = reader.line_num
            if not rec:
                continue
            if len(rec) != len(GRAVITY_COLUMNS):
                raise RowError(line, f"expected {len(GRAVITY_COLUMNS)} fields, got {len(rec)}")
            try:
                row = GravityRow(int(rec[0]), rec[1].strip(), rec[2].strip(),
                                 float(rec[3]), float(rec[4]), float(rec[5]))
            except ValueError as e:
                raise RowError(line, str(e)) from None
            if not (row.gdp_reporter > 0 and row.gdp_partner > 0 and row.harmonic_distance > 0):
                raise RowError(line, "GDP and harmonic distance must be positive")
            if years is None or row.year in years:
                out.append(row)
    return out


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, Enum):
        return x.value
    return str(x)


def _write_rows(path, columns, rows):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in columns])


def write_trade_csv(rows: Iterable[TradeRow], path) -> None:
    _write_rows(path, TRADE_COLUMNS, rows)


def write_gravity_csv(rows: Iterable[GravityRow], path) -> None:
    _write_rows(path, GRAVITY_COLUMNS, rows)


def join_gravity(trade_rows: Sequence[TradeRow], gravity_rows: Sequence[GravityRow],
                 registry: EntityRegistry | None = None) -> tuple[list[TradeRecord], JoinSummary]:
    """Inner-join monthly trade rows with yearly covariates keyed by (year, reporter, partner).

    Countries are interned in sorted label order so that the resulting
    EntityIds do not depend on input row order.
    """
    cov: dict[tuple[int, str, str], GravityRow] = {}
    for g in gravity_rows:
        key = (g.year, g.reporter, g.partner)
        if key in cov:
            raise AmbiguousCovariates(f"duplicate gravity covariates for {key}")
        cov[key] = g
    if registry is None:
        labels = {r.reporter for r in trade_rows} | {r.partner for r in trade_rows}
        registry = EntityRegistry(sorted(labels))
    summary = JoinSummary()
    out = []
    for r in trade_rows:
        g = cov.get((r.year, r.reporter, r.partner))
        if g is None:
            summary.unmatched += 1
            if len(summary.unmatched_keys) < 100:
                summary.unmatched_keys.append((r.year, r.reporter, r.partner))
            continue
        out.append(TradeRecord(r.year, r.month, registry.intern(r.reporter), registry.intern(r.partner),
                               r.commodity, r.trade_value, g.gdp_reporter, g.gdp_partner,
                               g.harmonic_distance))
    summary.matched = len(out)
    if summary.unmatched:
        log.info("join: %d trade rows without covariates dropped", summary.unmatched)
    return out, summary


def apply_log(records: Iterable[TradeRecord], fields: Iterable[str] = LOG_FIELDS) -> list[TradeRecord]:
    """Natural log of the chosen fields; trade_value uses log1p since zeros occur."""
    fields = tuple(fields)
    for f in fields:
        if f not in LOG_FIELDS:
            raise ValueError(f"cannot log-transform field {f!r}")
    out = []
    for r in records:
        changes = {}
        for f in fields:
            v = getattr(r, f)
            if f == "trade_value":
                if v < 0:
                    raise DomainError(f"trade_value {v} < 0")
                changes[f] = math.log1p(v)
            else:
                if v <= 0:
                    raise DomainError(f"{f}={v} is not positive")
                changes[f] = math.log(v)
        out.append(dataclasses.replace(r, **changes))
    return out


def undo_log(records: Iterable[TradeRecord], fields: Iterable[str] = LOG_FIELDS) -> list[TradeRecord]:
    fields = tuple(fields)
    return [dataclasses.replace(r, **{f: (math.expm1 if f == "trade_value" else math.exp)(getattr(r, f))
                                      for f in fields})
            for r in records]


def write_records_csv(records: Iterable[TradeRecord], path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow([r.year, r.month, r.reporter.label, r.partner.label, r.commodity,
                        repr(r.trade_value), repr(r.gdp_reporter), repr(r.gdp_partner),
                        repr(r.harmonic_distance)])


def load_records_csv(path) -> list[TradeRecord]:
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        _check_header(next(reader, None), RECORD_COLUMNS, path)
        raw = [rec for rec in reader if rec]
    registry = EntityRegistry(sorted({r[2] for r in raw} | {r[3] for r in raw}))
    return [TradeRecord(int(r[0]), int(r[1]), registry.get(r[2]), registry.get(r[3]), r[4],
                        float(r[5]), float(r[6]), float(r[7]), float(r[8])) for r in raw]


# -- synthetic data -----------------------------------------------------------

_ISO3 = ("DEU FRA USA CHN GBR ITA NLD POL AUT ESP BEL CHE JPN KOR IND BRA CAN MEX RUS TUR "
         "SWE NOR DNK FIN PRT GRC IRL CZE HUN ROU AUS NZL ZAF EGY NGA ARG CHL COL PER IDN "
         "MYS THA VNM PHL SGP SAU ARE ISR UKR KAZ").split()


@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale stand-in for the real trade panel.

    Countries sit at latent 2-D locations; their distances, log-uniform GDPs
    and a per-commodity weight give trade = G * M_i * M_j / D_ij * w_c * noise.
    Only ``link_fraction`` of country pairs trade at all (the most attracted
    ones, up to ``link_noise`` jitter), and each directed pair ships each
    commodity with probability ``row_density``.
    """

    n_countries: int = 20
    n_commodities: int = 50
    months: int = 48
    noise_sigma: float = 0.5
    start_year: int = 2015
    link_fraction: float = 0.4
    link_noise: float = 0.5
    row_density: float = 0.1
    constant_G: float = 1000.0
    gdp_range: tuple[float, float] = (5.0, 5000.0)
    distance_range: tuple[float, float] = (150.0, 19000.0)
    growth_range: tuple[float, float] = (-0.01, 0.03)

    def validate(self) -> None:
        if self.n_countries < 2:
            raise ConfigError("n_countries must be >= 2")
        if self.n_commodities < 1 or self.months < 1:
            raise ConfigError("n_commodities and months must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not (0 < self.link_fraction <= 1 and 0 < self.row_density <= 1):
            raise ConfigError("link_fraction and row_density must lie in (0, 1]")
        if self.constant_G <= 0:
            raise ConfigError("constant_G must be positive")

    @property
    def years(self) -> list[int]:
        return sorted({self.start_year + m // 12 for m in range(self.months)})

    def candidate_rows(self) -> int:
        n = self.n_countries
        return n * (n - 1) * self.n_commodities * self.months


def country_labels(n: int) -> list[str]:
    if n <= len(_ISO3):
        return sorted(_ISO3[:n])
    return sorted(_ISO3) + [f"X{i:02d}" for i in range(n - len(_ISO3))]


@dataclass
class SyntheticWorld:
    """Latent ground truth behind a synthetic dataset."""

    countries: list[str]
    commodities: list[str]
    locations: np.ndarray
    distance: np.ndarray
    gdp: np.ndarray             # (years, countries)
    commodity_weight: np.ndarray
    active_pairs: list[tuple[int, int]]


def synthetic_world(spec: SyntheticSpec, seed: int) -> SyntheticWorld:
    spec.validate()
    n = spec.n_countries
    countries = country_labels(n)
    rng = rng_for(seed, "synthetic/commodities")
    codes = rng.choice(np.arange(10_000, 1_000_000), size=spec.n_commodities, replace=False)
    commodities = [f"{c:06d}" for c in sorted(codes)]
    weight = np.exp(rng.normal(0.0, 1.0, size=spec.n_commodities))

    rng = rng_for(seed, "synthetic/geography")
    loc = rng.uniform(0.0, 1.0, size=(n, 2))
    euclid = np.sqrt(((loc[:, None, :] - loc[None, :, :]) ** 2).sum(-1)) / math.sqrt(2.0)
    lo, hi = spec.distance_range
    dist = np.exp(math.log(lo) + (math.log(hi) - math.log(lo)) * euclid)
    np.fill_diagonal(dist, 0.0)

    rng = rng_for(seed, "synthetic/masses")
    glo, ghi = spec.gdp_range
    base = np.exp(rng.uniform(math.log(glo), math.log(ghi), size=n))
    growth = rng.uniform(*spec.growth_range, size=n)
    n_years = len(spec.years)
    gdp = base[None, :] * (1.0 + growth[None, :]) ** np.arange(n_years)[:, None]

    rng = rng_for(seed, "synthetic/links")
    iu, ju = np.triu_indices(n, 1)
    logg = np.log(base[iu]) + np.log(base[ju]) - np.log(dist[iu, ju])
    z = (logg - logg.mean()) / (logg.std() or 1.0)
    z = z + rng.normal(0.0, spec.link_noise, size=z.shape)
    n_active = max(1, int(round(spec.link_fraction * len(z))))
    order = np.argsort(-z, kind="stable")[:n_active]
    active = sorted((int(iu[k]), int(ju[k])) for k in order)
    return SyntheticWorld(countries, commodities, loc, dist, gdp, weight, active)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> tuple[list[TradeRow], list[GravityRow]]:
    """Deterministic (trade rows, gravity rows) for ``spec`` and ``seed``."""
    world = synthetic_world(spec, seed)
    n = spec.n_countries
    years = spec.years
    G = spec.constant_G

    gravity_rows = []
    for yi, year in enumerate(years):
        for i in range(n):
            for j in range(n):
                if i != j:
                    gravity_rows.append(GravityRow(year, world.countries[i], world.countries[j],
                                                   float(world.gdp[yi, i]), float(world.gdp[yi, j]),
                                                   float(world.distance[i, j])))

    rng = rng_for(seed, "synthetic/rows")
    month_year = np.array([m // 12 for m in range(spec.months)])
    month_num = np.array([m % 12 + 1 for m in range(spec.months)])
    directed = [(i, j) for a, b in world.active_pairs for (i, j) in ((a, b), (b, a))]
    trade_rows = []
    for i, j in directed:
        shipped = rng.random(spec.n_commodities) < spec.row_density
        noise = rng.normal(0.0, 1.0, size=(spec.n_commodities, spec.months))
        gi = world.gdp[month_year, i]
        gj = world.gdp[month_year, j]
        d = world.distance[i, j]
        for c in np.flatnonzero(shipped):
            value = G * gi * gj / d * world.commodity_weight[c]
            if spec.noise_sigma > 0:
                value = value * np.exp(spec.noise_sigma * noise[c])
            for m in range(spec.months):
                trade_rows.append(TradeRow(spec.start_year + int(month_year[m]), int(month_num[m]),
                                           world.countries[i], world.countries[j],
                                           world.commodities[c], Flow.EXPORTS, float(value[m])))
    trade_rows.sort(key=lambda r: (r.year, r.month, r.reporter, r.partner, r.commodity))
    return trade_rows, gravity_rows


def write_synthetic(spec: SyntheticSpec, seed: int, out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trade, gravity = generate_synthetic(spec, seed)
    paths = {"trade": out_dir / "trade.csv", "gravity": out_dir / "gravity.csv",
             "provenance": out_dir / "provenance.json"}
    write_trade_csv(trade, paths["trade"])
    write_gravity_csv(gravity, paths["gravity"])
    prov = {"generator": "gravitykg.synthetic", "seed": int(seed), "spec": dataclasses.asdict(spec),
            "candidate_rows": spec.candidate_rows(), "trade_rows": len(trade),
            "gravity_rows": len(gravity), "years": spec.years}
    paths["provenance"].write_text(json.dumps(prov, indent=2, sort_keys=True) + "\n")
    return paths


def load_dataset(cfg: DatasetConfig) -> tuple[list[TradeRecord], JoinSummary]:
    trade = load_trade_csv(cfg.trade_path, cfg.years, cfg.flow)
    gravity = load_gravity_csv(cfg.gravity_path, cfg.years)
    records, summary = join_gravity(trade, gravity)
    if cfg.log_transform:
        records = apply_log(records)
    return records, summary
