"""Run-directory stages: each reads the files written by earlier stages and
writes its own, so any stage can be re-run on its own.

    synth -> ingest -> gravity -> cluster -> build-kg -> train
          -> {dtree, gnn} -> project -> metrics.json
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import dtree, gnn, projection, transe
from .clustering import ClusterMethod, select_partition
from .errors import ConfigError
from .evaluation import regression_metrics
from .gravity import GravityParams, load_scores_csv, score_all_pairs, write_scores_csv
from .ingestion import (DatasetConfig, Flow, SyntheticSpec, load_dataset, load_records_csv, write_records_csv,
                        write_synthetic)
from .kg import SplitReport, band_map_from, build_kg, load_bands_json, load_kg_tsv, split_triples, write_bands_json, \
    write_kg_tsv
from .seeding import derive_seed

log = logging.getLogger(__name__)

DTREE_VARIANTS = (("basic", False, False), ("basic+log", False, True),
                  ("embedding", True, False), ("embedding+log", True, True))
GNN_VARIANTS = ("basic", "embedding")


_SECTIONS = {"synth": SyntheticSpec, "transe": transe.TranseConfig, "dtree": dtree.DTreeConfig,
             "gnn": gnn.GnnConfig}


@dataclass
class RunConfig:
    seed: int = 7
    trade_path: str | None = None
    gravity_path: str | None = None
    years: list[int] | None = None
    flow: str = "Exports"
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)
    method: str = "kmeans"
    cluster_params: dict[str, Any] = field(default_factory=dict)
    log_scores: bool = True
    directed_single: bool = False
    train_frac: float = 0.8
    transe: transe.TranseConfig = field(default_factory=transe.TranseConfig)
    dtree: dtree.DTreeConfig = field(default_factory=dtree.DTreeConfig)
    gnn: gnn.GnnConfig = field(default_factory=gnn.GnnConfig)
    neighbors_k: int = 5

    def __post_init__(self):
        try:
            ClusterMethod.parse(self.method)
            Flow.parse(self.flow)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if not 0 < self.train_frac < 1:
            raise ConfigError("train_frac must lie in (0, 1)")
        if self.neighbors_k < 1:
            raise ConfigError("neighbors_k must be positive")
        self.synth.validate()

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for name, typ in _SECTIONS.items():
            if name in doc:
                doc[name] = _section(typ, doc[name])
        return cls(**doc)

    def with_overrides(self, **kw) -> "RunConfig":
        """Top-level keys plus ``section.field`` keys; ``None`` values are ignored."""
        top, nested = {}, {}
        for k, v in kw.items():
            if v is None:
                continue
            if "." in k:
                sec, name = k.split(".", 1)
                nested.setdefault(sec, {})[name] = v
            else:
                top[k] = v
        for sec, vals in nested.items():
            if sec == "cluster_params":
                top["cluster_params"] = {**self.cluster_params, **top.get("cluster_params", {}), **vals}
            else:
                top[sec] = _section(_SECTIONS[sec], {**dataclasses.asdict(getattr(self, sec)), **vals})
        return dataclasses.replace(self, **top)

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def stage_seed(self, label: str) -> int:
        return derive_seed(self.seed, label)


def _section(typ, values):
    if isinstance(values, typ):
        return values
    names = {f.name for f in dataclasses.fields(typ)}
    bad = set(values) - names
    if bad:
        raise ConfigError(f"unknown {typ.__name__} keys: {sorted(bad)}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    try:
        return typ(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    return obj


def write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def threads() -> int:
    raw = os.environ.get("GRAVITYKG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"GRAVITYKG_THREADS must be an integer, got {raw!r}") from None


def _map(fn: Callable, items) -> list:
    items = list(items)
    n = min(threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# -- stages -------------------------------------------------------------------

def stage_synth(out: Path, cfg: RunConfig) -> list[Path]:
    """Synthetic data uses the run seed itself so ``--seed 7`` is the seed-7 fixture."""
    return list(write_synthetic(cfg.synth, cfg.seed, out).values())


def stage_ingest(out: Path, cfg: RunConfig) -> list[Path]:
    trade = Path(cfg.trade_path) if cfg.trade_path else out / "trade.csv"
    grav = Path(cfg.gravity_path) if cfg.gravity_path else out / "gravity.csv"
    records, summary = load_dataset(DatasetConfig(trade, grav, cfg.years, cfg.flow))
    if not records:
        raise ValueError("no trade rows matched a gravity row")
    write_records_csv(records, out / "records.csv")
    write_json({"records": len(records), "matched": summary.matched, "unmatched": summary.unmatched,
                "years": sorted({r.year for r in records}),
                "countries": len({e.label for r in records for e in (r.reporter, r.partner)})},
               out / "ingest.json")
    return [out / "records.csv", out / "ingest.json"]


def stage_gravity(out: Path, cfg: RunConfig) -> list[Path]:
    scores = score_all_pairs(load_records_csv(out / "records.csv"), GravityParams())
    write_scores_csv(scores, out / "scores.csv")
    return [out / "scores.csv"]


def stage_cluster(out: Path, cfg: RunConfig) -> list[Path]:
    scores = load_scores_csv(out / "scores.csv")
    vals = [math.log(s.score) if cfg.log_scores else s.score for s in scores]
    params = {"seed": cfg.stage_seed("cluster"), **cfg.cluster_params}
    result = select_partition(vals, cfg.method, params)
    bands = band_map_from(result, vals, log_scores=cfg.log_scores)
    write_bands_json(result, bands, cfg.log_scores, out / "bands.json")
    return [out / "bands.json"]


def stage_build_kg(out: Path, cfg: RunConfig) -> list[Path]:
    scores = load_scores_csv(out / "scores.csv")
    bands = load_bands_json(out / "bands.json")
    kg = build_kg(scores, bands, log_scores=cfg.log_scores, directed_single=cfg.directed_single)
    # one graph per year as well; downstream models use the pooled graph
    yearly = []
    (out / "kg-by-year").mkdir(exist_ok=True)
    for year in sorted({s.year for s in scores}):
        path = out / "kg-by-year" / f"{year}.tsv"
        write_kg_tsv(build_kg([s for s in scores if s.year == year], bands, log_scores=cfg.log_scores,
                              directed_single=cfg.directed_single), path)
        yearly.append(path)
    report = SplitReport()
    train_kg, test_kg = split_triples(kg, cfg.train_frac, cfg.stage_seed("kg-split"), report)
    write_kg_tsv(kg, out / "kg.tsv")
    write_kg_tsv(train_kg, out / "kg-train.tsv")
    write_kg_tsv(test_kg, out / "kg-test.tsv")
    write_json({"entities": [e.label for e in kg.entities], "relations": [r.name for r in kg.relations],
                "triples": len(kg.triples), "train_triples": len(train_kg.triples),
                "test_triples": len(test_kg.triples), "train_pairs": report.train_pairs,
                "test_pairs": report.test_pairs, "moved_to_train": report.moved_to_train},
               out / "kg.json")
    return [out / p for p in ("kg.tsv", "kg-train.tsv", "kg-test.tsv", "kg.json")] + yearly


def _load_kgs(out: Path):
    entities = read_json(out / "kg.json")["entities"]
    return tuple(load_kg_tsv(out / f, entities) for f in ("kg.tsv", "kg-train.tsv", "kg-test.tsv"))


def stage_train(out: Path, cfg: RunConfig) -> list[Path]:
    kg, train_kg, test_kg = _load_kgs(out)
    tcfg = dataclasses.replace(cfg.transe, seed=cfg.stage_seed("transe"))
    space, trace = transe.train(train_kg, tcfg)
    transe.write_embeddings_csv(space, out / "embeddings.csv")
    transe.write_trace_csv(trace, out / "transe-trace.csv")
    doc: dict[str, Any] = {"initial_loss": trace.mean_loss[0] if len(trace) else None,
                           "final_loss": trace.mean_loss[-1] if len(trace) else None}
    if test_kg.triples:
        doc["test"] = dataclasses.asdict(transe.evaluate_links(test_kg.triples, space, kg.triples))
    write_json(doc, out / "link-metrics.json")
    return [out / "embeddings.csv", out / "transe-trace.csv", out / "link-metrics.json"]


def _both_scales(y, p, log_target: bool) -> dict:
    y, p = np.asarray(y), np.asarray(p)
    if log_target:
        log_y, log_p, raw_y, raw_p = y, p, np.expm1(y), np.expm1(p)
    else:
        raw_y, raw_p, log_y, log_p = y, p, np.log1p(y), np.log1p(np.maximum(p, 0.0))
    return {"raw_scale": regression_metrics(raw_y, raw_p).to_dict(),
            "log_scale": regression_metrics(log_y, log_p).to_dict()}


def stage_dtree(out: Path, cfg: RunConfig) -> list[Path]:
    records = load_records_csv(out / "records.csv")
    space = transe.load_embeddings_csv(out / "embeddings.csv", cfg.transe.norm)
    train_idx, test_idx = dtree.train_test_indices(len(records), 0.8, cfg.stage_seed("dtree-split"))

    def run(variant):
        name, use_emb, use_log = variant
        fm = dtree.build_features(records, space if use_emb else None, log=use_log)
        tree = dtree.fit(fm.subset(train_idx), cfg.dtree)
        pred = tree.predict_matrix(fm.rows[test_idx])
        d = out / "dtree" / name
        d.mkdir(parents=True, exist_ok=True)
        dtree.write_tree_json(tree, d / "tree.json")
        dtree.write_importance_csv(dtree.feature_importance(tree), fm.names, d / "importance.csv")
        return {"model": name, "embedding": use_emb, "log": use_log, "n_nodes": tree.n_nodes,
                "depth": tree.depth(), **_both_scales(fm.target[test_idx], pred, use_log)}

    rows = _map(run, DTREE_VARIANTS)
    write_json({"train_rows": int(train_idx.size), "test_rows": int(test_idx.size), "rows": rows},
               out / "dtree-metrics.json")
    return [out / "dtree-metrics.json"] + [out / "dtree" / v[0] / f for v in DTREE_VARIANTS
                                           for f in ("tree.json", "importance.csv")]


def gnn_datasets(out: Path, cfg: RunConfig, features: str):
    kg, train_kg, test_kg = _load_kgs(out)
    records = load_records_csv(out / "records.csv")
    space = transe.load_embeddings_csv(out / "embeddings.csv", cfg.transe.norm)
    known = kg.pairs()
    ratio = cfg.gnn.negative_ratio
    train_ds = gnn.make_edge_dataset(train_kg, features, space, records, negative_ratio=ratio,
                                     seed=cfg.stage_seed("gnn-negatives-train"), known_pairs=known)
    used = [(train_ds.nodes[i], train_ds.nodes[j]) for i, j in train_ds.negative_edges]
    test_ds = None
    if test_kg.triples:
        test_ds = gnn.make_edge_dataset(test_kg, features, space, records, negative_ratio=ratio,
                                        seed=cfg.stage_seed("gnn-negatives-test"), known_pairs=known,
                                        neighbor_kg=train_kg, exclude=used)
    return train_ds, test_ds


def stage_gnn(out: Path, cfg: RunConfig) -> list[Path]:
    gcfg = dataclasses.replace(cfg.gnn, seed=cfg.stage_seed("gnn"))

    def run(features):
        train_ds, test_ds = gnn_datasets(out, cfg, features)
        params, trace = gnn.train_gnn(train_ds, gcfg)
        d = out / "gnn" / features
        d.mkdir(parents=True, exist_ok=True)
        gnn.write_gnn_trace(trace, d / "gnn-trace.csv")
        train_cm = gnn.evaluate_gnn(params, train_ds, gcfg.threshold)
        test_cm = gnn.evaluate_gnn(params, test_ds, gcfg.threshold) if test_ds else None
        extra = {"features": features, "initial_mse": trace[0] if trace else None,
                 "final_mse": gnn.final_mse(train_ds, params), "train_accuracy": train_cm.accuracy,
                 "train_edges": len(train_ds.labels), "test_edges": len(test_ds.labels) if test_ds else 0}
        gnn.write_gnn_report(test_cm if test_cm else train_cm, gcfg, d / "gnn-report.json",
                             {**extra, "evaluated_on": "test" if test_cm else "train"})
        return {**extra, "test_accuracy": test_cm.accuracy if test_cm else None,
                "test_confusion": test_cm.to_dict() if test_cm else None}

    rows = _map(run, GNN_VARIANTS)
    write_json({"rows": rows}, out / "gnn-metrics.json")
    return [out / "gnn-metrics.json"] + [out / "gnn" / f / n for f in GNN_VARIANTS
                                         for n in ("gnn-trace.csv", "gnn-report.json")]


def stage_project(out: Path, cfg: RunConfig) -> list[Path]:
    space = transe.load_embeddings_csv(out / "embeddings.csv", cfg.transe.norm)
    proj = projection.pca_3d(space)
    projection.write_projection_csv(proj, out / "projection.csv")
    projection.write_variance_json(proj, out / "variance.json")
    projection.write_neighbors_csv(space, cfg.neighbors_k, out / "neighbors.csv")
    return [out / "projection.csv", out / "variance.json", out / "neighbors.csv"]


def collect_metrics(out: Path) -> dict:
    bands = read_json(out / "bands.json")
    kg = read_json(out / "kg.json")
    return {
        "ingest": read_json(out / "ingest.json"),
        "clustering": {k: bands[k] for k in ("method", "k", "thresholds", "log_scores", "noise_count")},
        "kg": {k: v for k, v in kg.items() if k != "entities"},
        "link_prediction": read_json(out / "link-metrics.json"),
        "regression": read_json(out / "dtree-metrics.json")["rows"],
        "gnn": read_json(out / "gnn-metrics.json")["rows"],
    }


def stage_metrics(out: Path, cfg: RunConfig) -> list[Path]:
    write_json(collect_metrics(out), out / "metrics.json")
    return [out / "metrics.json"]


STAGES: dict[str, Callable[[Path, RunConfig], list[Path]]] = {
    "synth": stage_synth, "ingest": stage_ingest, "gravity": stage_gravity, "cluster": stage_cluster,
    "build-kg": stage_build_kg, "train": stage_train, "dtree": stage_dtree, "gnn": stage_gnn,
    "project": stage_project, "metrics": stage_metrics,
}
PIPELINE = ("ingest", "gravity", "cluster", "build-kg", "train", "dtree", "gnn", "project", "metrics")


class StageFailed(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def run_stage(name: str, out, cfg: RunConfig) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    log.info("stage %s", name)
    return STAGES[name](out, cfg)


def run_pipeline(out, cfg: RunConfig = RunConfig()) -> list[Path]:
    """Synthesise data unless an input trade file is configured, then run
    every stage. Failures are re-raised as :class:`StageFailed`."""
    out = Path(out)
    stages = list(PIPELINE)
    if cfg.trade_path is None and cfg.gravity_path is None:
        stages.insert(0, "synth")
    written: list[Path] = []
    for name in stages:
        try:
            written += run_stage(name, out, cfg)
        except (FileNotFoundError, ConfigError):
            raise
        except Exception as e:  # noqa: BLE001 - report which stage broke
            raise StageFailed(name, e) from e
    return written
