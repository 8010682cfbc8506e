import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from gravitykg.clustering import (ClusterMethod, agglomerative_1d, dbscan_1d, gmm_1d, kmeans_1d, mean_shift_1d,
                                  select_partition, silhouette, sse)
from gravitykg.errors import InfeasibleK

small = st.lists(st.floats(-100, 100, allow_nan=False).map(lambda v: round(v, 3)), min_size=4, max_size=9)


def test_kmeans_two_groups():
    res = kmeans_1d([1, 1, 1, 9, 9, 9], 2, seed=0)
    assert list(res.centers) == [1.0, 9.0]
    assert res.assignments.tolist() == [0, 0, 0, 1, 1, 1]
    assert sse([1, 1, 1, 9, 9, 9], res.assignments) == oracles.optimal_sse([1, 1, 1, 9, 9, 9], 2) == 0


def test_kmeans_constant_k1():
    res = kmeans_1d([4.5] * 5, 1)
    assert list(res.centers) == [4.5]


def test_kmeans_k_exceeds_distinct():
    with pytest.raises(InfeasibleK):
        kmeans_1d([1, 2, 3], 4)


def test_agglomerative_largest_gap():
    res = agglomerative_1d([0, 0.1, 10, 10.1], 2)
    assert res.groups() == {frozenset({0, 1}), frozenset({2, 3})}


def test_agglomerative_k_equals_n():
    res = agglomerative_1d([3, 1, 2], 3)
    assert len(res.groups()) == 3


def test_agglomerative_single_point():
    res = agglomerative_1d([5], 1)
    assert res.k == 1 and res.assignments.tolist() == [0]


def test_dbscan_cluster_and_noise():
    res = dbscan_1d([1, 1.1, 1.2, 50], eps=0.5, min_pts=2)
    assert res.k == 1
    assert list(res.noise_indices) == [3]
    assert res.assignments[:3].tolist() == [0, 0, 0]


def test_dbscan_wide_eps():
    res = dbscan_1d([1, 2, 3, 7], eps=100, min_pts=2)
    assert res.k == 1 and len(res.noise_indices) == 0


def test_dbscan_min_pts_above_n():
    res = dbscan_1d([1, 2, 3], eps=0.5, min_pts=5)
    assert sorted(res.noise_indices) == [0, 1, 2]


def test_gmm_point_masses():
    x = [0.0] * 10 + [100.0] * 10
    res = gmm_1d(x, 2, seed=1)
    assert res.centers == pytest.approx([0.0, 100.0], abs=1e-6)


def test_gmm_k1_closed_form():
    x = np.array([1.0, 2.0, 4.0, 8.0, 9.5])
    res = gmm_1d(x, 1)
    assert res.params["means"][0] == pytest.approx(x.mean())
    assert res.params["variances"][0] == pytest.approx(x.var())


def test_gmm_likelihood_monotone():
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.normal(0, 1, 40), rng.normal(4, 0.5, 30), rng.normal(9, 2, 30)])
    res = gmm_1d(x, 3, seed=3)
    ll = np.array(res.params["log_likelihood"])
    assert (np.diff(ll) >= -1e-9).all()


def test_mean_shift_one_blob():
    x = [5.0, 5.1, 4.9, 5.05]
    res = mean_shift_1d(x, bandwidth=1.0)
    assert res.k == 1
    assert res.centers[0] == pytest.approx(np.mean(x), abs=1e-3)


def test_mean_shift_two_blobs():
    x = [0, 0.1, 0.2, 20, 20.1, 20.2]
    assert mean_shift_1d(x, bandwidth=1.0).k == 2


def test_mean_shift_wide_bandwidth():
    assert mean_shift_1d([0, 1, 3, 9], bandwidth=10).k == 1


def test_select_three_blobs():
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.normal(c, 0.2, 15) for c in (0, 10, 20)])
    res = select_partition(x, ClusterMethod.KMEANS)
    assert res.k == 3
    by_k = {k: oracles.silhouette(x, kmeans_1d(x, k).assignments) for k in range(2, 9)}
    assert max(by_k, key=by_k.get) == 3


def test_select_dbscan_ignores_k():
    res = select_partition([1, 1.1, 1.2, 50], "dbscan", {"eps": 0.5, "min_pts": 2, "k": 3})
    assert res.k == 1


def test_select_empty():
    with pytest.raises(InfeasibleK):
        select_partition([], "kmeans")


@pytest.mark.parametrize("alias,method", [("kmeans", ClusterMethod.KMEANS), ("dendrogram", ClusterMethod.AGGLOMERATIVE),
                                          ("gmm", ClusterMethod.GMM), ("meanshift", ClusterMethod.MEANSHIFT)])
def test_method_aliases(alias, method):
    assert ClusterMethod.parse(alias) is method


def test_unknown_method():
    with pytest.raises(ValueError):
        ClusterMethod.parse("spectral")


@given(small)
def test_silhouette_matches_brute_force(x):
    x = np.array(x)
    if np.unique(x).size < 3:
        return
    labels = kmeans_1d(x, 2).assignments
    assert silhouette(x, labels) == pytest.approx(oracles.silhouette(x, labels), abs=1e-9)


@given(small, st.integers(2, 3))
@settings(max_examples=60)
def test_kmeans_globally_optimal(x, k):
    if np.unique(x).size < k:
        return
    res = kmeans_1d(x, k, seed=0)
    assert sse(x, res.assignments) <= oracles.optimal_sse(x, k) + 1e-7 * (1 + np.var(x) * len(x))


@given(small, st.integers(2, 3))
def test_kmeans_single_moves_do_not_help(x, k):
    x = np.array(x)
    if np.unique(x).size < k:
        return
    lab = kmeans_1d(x, k, seed=0).assignments
    base = sse(x, lab)
    for i in range(x.size):
        for c in range(k):
            if c == lab[i] or (lab == lab[i]).sum() == 1:
                continue
            moved = lab.copy()
            moved[i] = c
            assert sse(x, moved) >= base - 1e-9 * (1 + base)


@given(small, st.integers(2, 3))
def test_agglomerative_maximises_spacing(x, k):
    if np.unique(x).size < k:
        return
    res = agglomerative_1d(x, k)
    assert oracles.min_gap_between(x, res.assignments) == pytest.approx(oracles.max_min_spacing(x, k))


@pytest.mark.parametrize("method", ["kmeans", "agglomerative", "gmm", "meanshift", "dbscan"])
@given(x=small)
@settings(max_examples=30)
def test_centers_ascend_with_labels(method, x):
    if np.unique(x).size < 3:
        return
    res = select_partition(x, method, {"k": 2, "eps": 5.0, "min_pts": 2, "bandwidth": 20.0})
    assert list(res.centers) == sorted(res.centers)
    xs = np.asarray(x)
    for c in range(res.k):
        members = xs[res.assignments == c]
        if members.size and method in ("kmeans", "agglomerative"):
            assert members.mean() == pytest.approx(res.centers[c])


@pytest.mark.parametrize("method", ["kmeans", "agglomerative", "gmm", "meanshift", "dbscan"])
@given(x=small, data=st.randoms(use_true_random=False))
@settings(max_examples=25)
def test_permutation_invariance(method, x, data):
    x = np.asarray(x)
    perm = list(range(x.size))
    data.shuffle(perm)
    params = {"k": 2, "eps": 5.0, "min_pts": 2, "bandwidth": 20.0}
    if np.unique(x).size < 2:
        return
    a = select_partition(x, method, params)
    b = select_partition(x[perm], method, params)
    assert (a.assignments[perm] == b.assignments).all()


@pytest.mark.parametrize("method", ["kmeans", "agglomerative", "meanshift"])
@given(x=small, c=st.floats(0.1, 50))
@settings(max_examples=30)
def test_uniform_scaling(method, x, c):
    x = np.asarray(x)
    if np.unique(x).size < 3:
        return
    bw = float(np.ptp(x)) / 4
    a = select_partition(x, method, {"k": 2, "bandwidth": bw})
    b = select_partition(x * c, method, {"k": 2, "bandwidth": bw * c})
    assert a.groups() == b.groups()
