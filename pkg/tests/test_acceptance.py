"""One test per acceptance criterion.

Each test prints a ``[criterion N] PASS|FAIL`` line with the measured values
and its runtime, then asserts both the criterion and the runtime budget.
"""
import hashlib
import json
import time

import numpy as np
import pytest

import oracles
from gravitykg.cli import main
from gravitykg.clustering import agglomerative_1d, kmeans_1d
from gravitykg.dtree import DTreeConfig, FeatureMatrix, Kind, Split, feature_importance, fit
from gravitykg.evaluation import confusion, regression_metrics
from gravitykg.fixtures import two_clique_kg
from gravitykg.gnn import EdgeDataset, GnnParams, mse_and_grad
from gravitykg.gravity import gravity_score
from gravitykg.model import EmbeddingSpace, Norm
from gravitykg.pipeline import RunConfig, read_json, run_stage
from gravitykg.projection import pca_3d
from gravitykg.transe import TranseConfig, evaluate_links, margin_loss_grad, train


@pytest.fixture
def report(capsys):
    def _report(n, ok, detail, elapsed, budget):
        line = f"[criterion {n}] {'PASS' if ok and elapsed < budget else 'FAIL'} {detail} ({elapsed:.2f}s, budget {budget}s)"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
        assert elapsed < budget, line
    return _report


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b))


def test_gravity_law(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    monotone = True
    for _ in range(1000):
        mi, mj, d = np.exp(rng.uniform(-10, 10, 3))
        c, f = np.exp(rng.uniform(-3, 3)), 1 + rng.uniform(0.01, 5)
        g = gravity_score(mi, mj, d)
        worst = max(worst, _rel(g, gravity_score(mj, mi, d)),
                    _rel(gravity_score(c * mi, c * mj, d), c * c * g))
        monotone &= gravity_score(f * mi, mj, d) > g and gravity_score(mi, f * mj, d) > g
        monotone &= gravity_score(mi, mj, f * d) < g
    report(1, worst <= 1e-12 and monotone, f"max rel err {worst:.2e}, monotone={monotone}",
           time.perf_counter() - t0, 1)


def test_clustering_matches_exhaustive_optimum(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    misses = {"kmeans": 0, "agglomerative": 0}
    for _ in range(100):
        n = int(rng.integers(3, 13))
        k = int(rng.integers(1, 4))
        x = rng.normal(size=n) * rng.uniform(0.1, 10)
        best = oracles.optimal_sse(x, k)
        tol = 1e-9 * max(1.0, best)
        misses["kmeans"] += oracles.partition_sse(x, kmeans_1d(x, k, seed=0).assignments) > best + tol
        misses["agglomerative"] += oracles.partition_sse(x, agglomerative_1d(x, k).assignments) > best + tol
    report(2, not any(misses.values()), f"suboptimal instances out of 100: {misses}", time.perf_counter() - t0, 10)


def test_transe_gradients(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    eps, worst, checked = 1e-5, 0.0, {Norm.L2: 0, Norm.L1: 0}
    for norm in (Norm.L2, Norm.L1):
        while checked[norm] < 50:
            v = rng.normal(size=(5, 6))
            val, grads = margin_loss_grad(*v, 1.5, norm)
            if val <= eps:
                continue
            if norm is Norm.L1:
                rp, rn = v[0] + v[1] - v[2], v[3] + v[1] - v[4]
                if min(np.abs(rp).min(), np.abs(rn).min()) < max(1e-6, eps) * 10:
                    continue
            f = lambda th: margin_loss_grad(*th.reshape(v.shape), 1.5, norm)[0]
            err = oracles.relative_error(np.concatenate(grads), oracles.central_difference(f, v.ravel(), eps))
            worst = max(worst, err)
            checked[norm] += 1
    report(3, worst < 1e-4, f"100 configurations, max rel err {worst:.2e}", time.perf_counter() - t0, 5)


def test_two_clique_link_prediction(report):
    t0 = time.perf_counter()
    kg = two_clique_kg()
    space, trace = train(kg, TranseConfig(seed=7))
    hits = evaluate_links(kg.triples, space).hits_at_1
    drop = 1 - trace.mean_loss[-1] / trace.mean_loss[0]
    report(4, hits >= 0.9 and drop >= 0.5, f"Hits@1 {hits:.3f}, loss drop {drop:.1%}", time.perf_counter() - t0, 30)


def test_decision_tree(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    zero_sse = True
    for _ in range(20):
        n = int(rng.integers(2, 30))
        X = rng.normal(size=(n, 3))
        y = rng.normal(size=n)
        tree = fit(FeatureMatrix([(f"x{i}", Kind.NUMERIC) for i in range(3)], X, y), DTreeConfig(max_depth=n))
        zero_sse &= float(((tree.predict_matrix(X) - y) ** 2).sum()) < 1e-18
    fm = FeatureMatrix([("x0", Kind.NUMERIC)], np.array([[1.0], [2.0], [3.0], [4.0]]), np.array([0.0, 0, 10, 10]))
    root = fit(fm).root
    f, thr, _ = oracles.best_split(fm.rows, fm.target)
    split_ok = isinstance(root, Split) and (root.feature, root.threshold) == (f, thr)
    X = rng.normal(size=(200, 4))
    y = X[:, 0] - 2 * X[:, 1] ** 2 + rng.normal(0, 0.1, 200)
    imp = feature_importance(fit(FeatureMatrix([(f"x{i}", Kind.NUMERIC) for i in range(4)], X, y)))
    total = sum(imp.values())
    report(5, zero_sse and split_ok and abs(total - 1) < 1e-12,
           f"zero SSE={zero_sse}, 4-point split={split_ok}, importance sum {total!r}", time.perf_counter() - t0, 5)


def test_gnn_gradient(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    ds = EdgeDataset([f"N{i}" for i in range(5)], rng.normal(size=(5, 3)), [(0, 1), (1, 2), (3, 4)],
                     [(0, 3), (2, 4)], [(0, 1), (1, 2), (3, 4)])
    p = GnnParams.init(3, 4, rng)
    p.b = rng.normal(0, 0.5, 4)
    p.c = 0.3
    _, g = mse_and_grad(ds, p)
    fd = oracles.central_difference(lambda th: mse_and_grad(ds, p.from_vector(th))[0], p.to_vector(), 1e-5)
    err = oracles.relative_error(g.to_vector(), fd)
    zero = mse_and_grad(ds, GnnParams.zeros(3, 4))[0]
    report(6, err < 1e-4 and zero == 0.25, f"rel err {err:.2e}, zero-weight MSE {zero!r}", time.perf_counter() - t0, 5)


def _fixture_config():
    cfg = RunConfig(seed=7)
    s = cfg.synth
    assert (s.n_countries, s.n_commodities, s.months, s.noise_sigma) == (20, 50, 48, 0.5)
    return cfg


def _run(out, cfg, stages):
    for name in stages:
        run_stage(name, out, cfg)


UPSTREAM = ("synth", "ingest", "gravity", "cluster", "build-kg", "train")


def test_embedding_log_tree_beats_basic(report, tmp_path):
    t0 = time.perf_counter()
    _run(tmp_path, _fixture_config(), UPSTREAM + ("dtree",))
    rows = {r["model"]: r for r in read_json(tmp_path / "dtree-metrics.json")["rows"]}
    basic, best = rows["basic"], rows["embedding+log"]
    ok = True
    detail = []
    for scale in ("log_scale", "raw_scale"):
        b, e = basic[scale], best[scale]
        # "embedding R2" is read as both embedding variants
        ok &= e["mae"] <= b["mae"] and min(e["r_square"], rows["embedding"][scale]["r_square"]) >= b["r_square"]
        detail.append(f"{scale}: MAE {e['mae']:.4g} vs {b['mae']:.4g}, R2 {e['r_square']:.4f} vs {b['r_square']:.4f}")
    report(7, ok, "embedding+log vs basic; " + "; ".join(detail), time.perf_counter() - t0, 60)


def test_embedding_gnn_beats_basic(report, tmp_path):
    t0 = time.perf_counter()
    _run(tmp_path, _fixture_config(), UPSTREAM + ("gnn",))
    rows = {r["features"]: r for r in read_json(tmp_path / "gnn-metrics.json")["rows"]}
    b, e = rows["basic"], rows["embedding"]
    mse_ok = e["final_mse"] <= b["final_mse"]
    acc_ok = e["test_accuracy"] >= b["test_accuracy"] + 0.02
    report(8, mse_ok and acc_ok,
           f"final MSE {e['final_mse']:.4f} vs {b['final_mse']:.4f} ({'ok' if mse_ok else 'worse'}), "
           f"held-out accuracy {e['test_accuracy']:.3f} vs {b['test_accuracy']:.3f} "
           f"({'ok' if acc_ok else 'margin below 0.02'})", time.perf_counter() - t0, 60)


def test_metrics_exact(report):
    t0 = time.perf_counter()
    m = regression_metrics([1, 2, 4, 8], [2, 1, 5, 6])
    ok = (m.mae, m.mape, m.mpe, m.r_square) == (1.25, 50.0, -12.5, 1 - 7 / 28.75)
    ok &= regression_metrics([1, 2, 3], [2, 2, 2]).r_square == 0.0
    cm = confusion([1, 1, 0, 0, 1], [0.9, 0.4, 0.6, 0.1, 0.5])
    ok &= (cm.tp, cm.fn, cm.fp, cm.tn, cm.accuracy) == (2, 1, 1, 1, 0.6)
    y = np.array([1e-6] * 10 + [1.0] * 10)
    blow = regression_metrics(y, y + 0.5)
    ok &= blow.mape > 1e4 and blow.mae < 1
    report(9, ok, f"hand-computed values match={ok}, near-zero MAPE {blow.mape:.3g} with MAE {blow.mae:.3g}",
           time.perf_counter() - t0, 1)


def test_pipeline_determinism(report, tmp_path):
    t0 = time.perf_counter()
    digests = []
    for name in ("a", "b"):
        assert main(["pipeline", "--out", str(tmp_path / name), "--seed", "7"]) == 0
        digests.append(tuple(hashlib.sha256((tmp_path / name / f).read_bytes()).hexdigest()
                             for f in ("metrics.json", "embeddings.csv")))
    same = digests[0] == digests[1]
    report(10, same, f"metrics.json and embeddings.csv identical={same}", time.perf_counter() - t0, 120)


def _space(X):
    return EmbeddingSpace(X.shape[1], tuple(f"E{i}" for i in range(len(X))), X, ("r",), np.zeros((1, X.shape[1])))


def _pdist(X):
    return np.linalg.norm(X[:, None] - X[None], axis=-1)


def test_projection(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst_exact, contraction = 0.0, True
    for _ in range(100):
        n, dim = int(rng.integers(4, 30)), int(rng.integers(3, 20))
        r = int(rng.integers(1, 4))
        low = rng.normal(size=(n, r)) @ rng.normal(size=(r, dim)) + rng.normal(size=dim)
        P = pca_3d(_space(low)).coordinates
        worst_exact = max(worst_exact, float(np.abs(_pdist(P) - _pdist(low)).max() / _pdist(low).max()))
        X = rng.normal(size=(n, dim))
        contraction &= bool((_pdist(pca_3d(_space(X)).coordinates) <= _pdist(X) + 1e-9).all())
    report(11, worst_exact < 1e-9 and contraction,
           f"rank<=3 max rel distance err {worst_exact:.2e}, contraction={contraction}", time.perf_counter() - t0, 5)
