"""Decision-tree comparison (basic vs embedding features, raw vs log) on the
synthetic panel, repeated over several generator seeds.

    python3 scripts/compare_trees.py --seeds 7 8 9
"""
import argparse
import tempfile

import numpy as np

from gravitykg.pipeline import RunConfig, read_json, run_stage

STAGES = ("synth", "ingest", "gravity", "cluster", "build-kg", "train", "dtree")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[7])
    ap.add_argument("--scale", choices=["log_scale", "raw_scale"], default="log_scale")
    args = ap.parse_args()

    table: dict[str, list[tuple[float, float, float, float]]] = {}
    for seed in args.seeds:
        cfg = RunConfig(seed=seed)
        with tempfile.TemporaryDirectory() as tmp:
            for stage in STAGES:
                run_stage(stage, tmp, cfg)
            rows = read_json(f"{tmp}/dtree-metrics.json")["rows"]
        for r in rows:
            m = r[args.scale]
            table.setdefault(r["model"], []).append((m["mae"], m["mape"] or np.nan, m["mpe"] or np.nan,
                                                     m["r_square"]))

    print(f"{args.scale}, seeds {args.seeds}")
    print(f"{'model':16s} {'MAE':>12s} {'MAPE':>12s} {'MPE':>12s} {'R2':>8s}")
    for model, vals in table.items():
        mae, mape, mpe, r2 = np.mean(np.array(vals, dtype=float), axis=0)
        print(f"{model:16s} {mae:12.4f} {mape:12.2f} {mpe:12.2f} {r2:8.4f}")


if __name__ == "__main__":
    main()
