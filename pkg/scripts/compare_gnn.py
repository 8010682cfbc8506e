"""Graph-network link prediction with basic covariates vs translational
embeddings as node features. Each seed re-splits the graph and retrains the
embeddings; held-out accuracy is averaged across seeds.

    python3 scripts/compare_gnn.py --seeds 0 1 2 3 4
"""
import argparse
import tempfile

import numpy as np

from gravitykg.pipeline import RunConfig, read_json, run_stage


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data-seed", type=int, default=7, help="synthetic generator seed")
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    args = ap.parse_args()

    res: dict[str, list[tuple[float, float, float]]] = {"basic": [], "embedding": []}
    with tempfile.TemporaryDirectory() as tmp:
        base = RunConfig(seed=args.data_seed)
        for stage in ("synth", "ingest", "gravity", "cluster"):
            run_stage(stage, tmp, base)
        for seed in args.seeds:
            cfg = RunConfig(seed=seed)
            for stage in ("build-kg", "train", "gnn"):
                run_stage(stage, tmp, cfg)
            for r in read_json(f"{tmp}/gnn-metrics.json")["rows"]:
                res[r["features"]].append((r["final_mse"], r["train_accuracy"], r["test_accuracy"]))
                print(f"seed {seed:3d} {r['features']:10s} mse {r['final_mse']:.4f} "
                      f"train acc {r['train_accuracy']:.3f} test acc {r['test_accuracy']:.3f}")
    print()
    for feat, vals in res.items():
        v = np.array(vals)
        print(f"{feat:10s} final mse {v[:, 0].mean():.4f}  train acc {v[:, 1].mean():.3f}  "
              f"test acc {v[:, 2].mean():.3f} +- {v[:, 2].std(ddof=1) if len(v) > 1 else 0:.3f}")


if __name__ == "__main__":
    main()
