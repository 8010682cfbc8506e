"""Command line entry point: ``gravitykg <subcommand> --out DIR [options]``.

Exit codes: 0 success, 1 missing input file, 2 bad configuration,
3 a stage failed (the stage is named on stderr).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import ConfigError
from .pipeline import PIPELINE, RunConfig, StageFailed, read_json, run_pipeline, run_stage

log = logging.getLogger("gravitykg")

# flag dest -> RunConfig override key
_OVERRIDES = {
    "seed": "seed", "trade": "trade_path", "gravity": "gravity_path", "years": "years", "flow": "flow",
    "countries": "synth.n_countries", "commodities": "synth.n_commodities", "months": "synth.months",
    "noise_sigma": "synth.noise_sigma", "start_year": "synth.start_year",
    "method": "method", "eps": "cluster_params.eps", "min_pts": "cluster_params.min_pts",
    "k": "cluster_params.k", "bandwidth": "cluster_params.bandwidth", "log_scores": "log_scores",
    "directed_single": "directed_single", "train_frac": "train_frac",
    "dim": "transe.dimension", "epochs": "transe.epochs", "margin": "transe.margin",
    "lr": "transe.learning_rate", "batch_size": "transe.batch_size", "norm": "transe.norm",
    "max_depth": "dtree.max_depth", "min_leaf": "dtree.min_leaf",
    "hidden": "gnn.hidden_dim", "gnn_epochs": "gnn.epochs", "gnn_lr": "gnn.learning_rate",
    "negative_ratio": "gnn.negative_ratio", "threshold": "gnn.threshold",
    "neighbors": "neighbors_k",
}


def parse_years(text: str) -> list[int]:
    years: set[int] = set()
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = (int(v) for v in part.split("-", 1))
                years.update(range(lo, hi + 1))
            elif part:
                years.add(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad year list {text!r}") from None
    if not years:
        raise argparse.ArgumentTypeError("empty year list")
    return sorted(years)


def _common(p):
    p.add_argument("--out", type=Path, default=Path("run"), help="run directory (default ./run)")
    p.add_argument("--seed", type=int, help="global seed (default 7)")
    p.add_argument("--config", type=Path, help="JSON config; flags override it")
    p.add_argument("-v", "--verbose", action="store_true")


def _synth(p):
    g = p.add_argument_group("synthetic data")
    g.add_argument("--countries", type=int)
    g.add_argument("--commodities", type=int)
    g.add_argument("--months", type=int)
    g.add_argument("--noise-sigma", type=float)
    g.add_argument("--start-year", type=int)


def _ingest(p):
    g = p.add_argument_group("ingestion")
    g.add_argument("--trade", help="trade CSV (default OUT/trade.csv)")
    g.add_argument("--gravity", help="gravity covariates CSV (default OUT/gravity.csv)")
    g.add_argument("--years", type=parse_years, help="e.g. 2015,2017 or 2015-2018")
    g.add_argument("--flow", choices=["Exports", "Imports"])


def _cluster(p):
    g = p.add_argument_group("clustering")
    g.add_argument("--method", help="kmeans, agglomerative, dbscan, gmm or meanshift")
    g.add_argument("--eps", type=float)
    g.add_argument("--min-pts", type=int)
    g.add_argument("--k", type=int, help="fixed band count (default: silhouette over 2..8)")
    g.add_argument("--bandwidth", type=float)
    g.add_argument("--raw-scores", dest="log_scores", action="store_const", const=False,
                   help="cluster raw instead of log gravity scores")


def _kg(p):
    g = p.add_argument_group("knowledge graph")
    g.add_argument("--directed-single", action="store_const", const=True)
    g.add_argument("--train-frac", type=float)


def _train(p):
    g = p.add_argument_group("embeddings")
    g.add_argument("--dim", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--margin", type=float)
    g.add_argument("--lr", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--norm", choices=["L1", "L2"])


def _dtree(p):
    g = p.add_argument_group("decision tree")
    g.add_argument("--max-depth", type=int)
    g.add_argument("--min-leaf", type=int)


def _gnn(p):
    g = p.add_argument_group("graph network")
    g.add_argument("--hidden", type=int)
    g.add_argument("--gnn-epochs", type=int)
    g.add_argument("--gnn-lr", type=float)
    g.add_argument("--negative-ratio", type=float)
    g.add_argument("--threshold", type=float)


def _project(p):
    p.add_argument_group("projection").add_argument("--neighbors", type=int)


SUBCOMMANDS = {
    "synth": (_synth,), "ingest": (_ingest,), "gravity": (), "cluster": (_cluster,),
    "build-kg": (_kg,), "train": (_train,), "dtree": (_train, _dtree), "gnn": (_train, _gnn),
    "project": (_train, _project),
    "pipeline": (_synth, _ingest, _cluster, _kg, _train, _dtree, _gnn, _project),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gravitykg", description="Gravity-band trade knowledge graphs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, groups in SUBCOMMANDS.items():
        p = sub.add_parser(name)
        _common(p)
        for add in groups:
            add(p)
    return parser


def load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config is not None:
        if not args.config.exists():
            raise FileNotFoundError(f"no such file: {args.config}")
        try:
            cfg = RunConfig.from_dict(json.loads(args.config.read_text()))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.config}: {e}") from None
    overrides = {key: getattr(args, dest) for dest, key in _OVERRIDES.items() if hasattr(args, dest)}
    try:
        return cfg.with_overrides(**overrides)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, argv: list[str], cfg: RunConfig, written: list[Path], started: str) -> None:
    path = out / "manifest.json"
    prev = read_json(path) if path.exists() else {}
    artifacts = dict(prev.get("artifacts", {}))
    for p in written:
        artifacts[str(p.relative_to(out))] = _sha256(p)
    inputs = {}
    for p in (cfg.trade_path, cfg.gravity_path):
        if p:
            inputs[str(p)] = _sha256(Path(p))
    runs = prev.get("runs", []) + [{"command": argv, "started": started,
                                   "finished": datetime.now(timezone.utc).isoformat()}]
    doc = {"software": {"name": "gravitykg", "version": __version__}, "seed": cfg.seed,
           "config": cfg.to_dict(), "config_digest": cfg.digest(), "inputs": inputs,
           "artifacts": dict(sorted(artifacts.items())), "runs": runs}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = datetime.now(timezone.utc).isoformat()
    try:
        cfg = load_config(args)
        out: Path = args.out
        if args.command == "pipeline":
            written = run_pipeline(out, cfg)
        else:
            try:
                written = run_stage(args.command, out, cfg)
                if args.command in PIPELINE[-4:-1] and (out / "dtree-metrics.json").exists() \
                        and (out / "gnn-metrics.json").exists():
                    written += run_stage("metrics", out, cfg)
            except (FileNotFoundError, ConfigError):
                raise
            except Exception as e:  # noqa: BLE001
                raise StageFailed(args.command, e) from e
        write_manifest(out, argv, cfg, written, started)
    except FileNotFoundError as e:
        print(f"gravitykg: error: {e}", file=sys.stderr)
        return 1
    except ConfigError as e:
        print(f"gravitykg: config error: {e}", file=sys.stderr)
        return 2
    except StageFailed as e:
        print(f"gravitykg: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
