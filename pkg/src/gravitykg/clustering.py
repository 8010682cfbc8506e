"""One-dimensional clustering of gravity scores into ordered bands.

Every method returns a :class:`ClusteringResult` whose cluster ids ascend with
the cluster centre, so id 0 is always the weakest band.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np

from .errors import InfeasibleK


class ClusterMethod(str, Enum):
    KMEANS = "KMeans"
    AGGLOMERATIVE = "Agglomerative"
    DBSCAN = "DBSCAN"
    GMM = "GaussianMixture"
    MEANSHIFT = "MeanShift"

    @classmethod
    def parse(cls, value) -> "ClusterMethod":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        aliases = {"kmeans": cls.KMEANS, "agglomerative": cls.AGGLOMERATIVE, "dendrogram": cls.AGGLOMERATIVE,
                   "hierarchical": cls.AGGLOMERATIVE, "dbscan": cls.DBSCAN, "gmm": cls.GMM,
                   "gaussianmixture": cls.GMM, "meanshift": cls.MEANSHIFT}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown clustering method {value!r}") from None


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    centers: list[float]
    method: ClusterMethod
    k: int
    noise_indices: list[int] = field(default_factory=list)
    params: dict[str, Any] = field(default_factory=dict)

    def groups(self) -> set[frozenset[int]]:
        """Partition as a set of index groups (label-free)."""
        out: dict[int, set[int]] = {}
        for i, c in enumerate(self.assignments):
            out.setdefault(int(c), set()).add(i)
        return {frozenset(g) for g in out.values()}


def _as_array(scores) -> np.ndarray:
    x = np.asarray(scores, dtype=float).ravel()
    if x.size == 0:
        raise InfeasibleK("no scores to cluster")
    if not np.isfinite(x).all():
        raise ValueError("scores must be finite")
    return x


def _check_k(x: np.ndarray, k: int) -> None:
    n_distinct = np.unique(x).size
    if k < 1 or k > n_distinct:
        raise InfeasibleK(f"k={k} infeasible for {n_distinct} distinct scores")


def sse(x, labels) -> float:
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    total = 0.0
    for c in np.unique(labels):
        m = x[labels == c]
        total += float(((m - m.mean()) ** 2).sum())
    return total


def _canonical(x: np.ndarray, labels: np.ndarray, centers: np.ndarray | None = None):
    """Relabel so ids ascend with centre value; drops empty clusters."""
    used = np.unique(labels[labels >= 0])
    if centers is None:
        cvals = np.array([x[labels == c].mean() for c in used])
    else:
        cvals = np.asarray(centers, dtype=float)[used]
    order = np.argsort(cvals, kind="stable")
    remap = np.full(int(labels.max(initial=-1)) + 1, -1, dtype=int)
    remap[used[order]] = np.arange(used.size)
    out = np.where(labels >= 0, remap[np.maximum(labels, 0)], -1)
    return out, [float(v) for v in cvals[order]]


# -- k-means ------------------------------------------------------------------

def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(x.size)]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            break
        centers.append(x[rng.choice(x.size, p=d2 / total)])
    return np.array(centers)


def _lloyd(x, centers, max_iter, tol):
    labels = np.zeros(x.size, dtype=int)
    for it in range(max_iter):
        labels = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
        new = centers.copy()
        for c in range(centers.size):
            m = labels == c
            if m.any():
                new[c] = x[m].mean()
            else:
                # empty cluster: reseed at the worst-fit point
                worst = np.argmax(np.min(np.abs(x[:, None] - new[None, :]), axis=1))
                new[c] = x[worst]
        shift = np.max(np.abs(new - centers))
        centers = new
        if shift < tol:
            break
    labels = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
    return labels


def _hartigan(x: np.ndarray, labels: np.ndarray, k: int, max_pass: int = 1000) -> np.ndarray:
    """Apply improving single-point moves until none is left."""
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k).astype(float)
    sums = np.bincount(labels, weights=x, minlength=k)
    for _ in range(max_pass):
        moved = False
        for i in range(x.size):
            a = labels[i]
            if counts[a] <= 1:
                continue
            means = sums / np.maximum(counts, 1)
            cost_out = counts[a] / (counts[a] - 1) * (x[i] - means[a]) ** 2
            cost_in = counts / (counts + 1) * (x[i] - means) ** 2
            cost_in[a] = np.inf
            b = int(np.argmin(cost_in))
            if cost_in[b] < cost_out * (1 - 1e-12) - 1e-300:
                counts[a] -= 1
                sums[a] -= x[i]
                counts[b] += 1
                sums[b] += x[i]
                labels[i] = b
                moved = True
        if not moved:
            break
    return labels


def kmeans_1d(scores: Sequence[float], k: int, seed: int = 0, max_iter: int = 300,
              tol: float = 1e-6, n_init: int = 10) -> ClusteringResult:
    """Lloyd's algorithm from k-means++ seeds, polished by Hartigan single-point moves.

    ``tol`` is relative to the standard deviation of the scores. The best of
    ``n_init`` restarts (lowest SSE) is returned.
    """
    x = _as_array(scores)
    _check_k(x, k)
    rng = np.random.default_rng(seed)
    scale = float(x.std()) or 1.0
    best, best_sse = None, math.inf
    for _ in range(max(1, n_init)):
        centers = _kmeanspp(x, k, rng)
        if centers.size < k:
            continue
        labels = _lloyd(x, centers, max_iter, tol * scale)
        labels = _hartigan(x, labels, k)
        s = sse(x, labels)
        if s < best_sse:
            best, best_sse = labels, s
    labels, centers = _canonical(x, best)
    return ClusteringResult(labels, centers, ClusterMethod.KMEANS, len(centers),
                            params={"k": k, "seed": seed, "max_iter": max_iter, "tol": tol,
                                    "n_init": n_init, "sse": best_sse})


# -- single-linkage agglomeration --------------------------------------------

def agglomerative_1d(scores: Sequence[float], k: int) -> ClusteringResult:
    """Single linkage cut at ``k`` clusters.

    In one dimension merging the smallest gap first is the same as cutting the
    ``k - 1`` widest gaps between sorted neighbours; ties cut the lower gap.
    """
    x = _as_array(scores)
    _check_k(x, k)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    gaps = np.diff(xs)
    # widest first, lower position on ties
    cut_rank = np.lexsort((np.arange(gaps.size), -gaps))[: k - 1]
    cuts = np.zeros(x.size, dtype=int)
    cuts[np.sort(cut_rank) + 1] = 1
    sorted_labels = np.cumsum(cuts)
    labels = np.empty(x.size, dtype=int)
    labels[order] = sorted_labels
    labels, centers = _canonical(x, labels)
    merge_heights = sorted(float(g) for g in gaps)
    return ClusteringResult(labels, centers, ClusterMethod.AGGLOMERATIVE, len(centers),
                            params={"k": k, "linkage": "single", "merge_heights": merge_heights})


# -- DBSCAN -------------------------------------------------------------------

def dbscan_1d(scores: Sequence[float], eps: float, min_pts: int, assign_noise: bool = True) -> ClusteringResult:
    """Density clustering on |a - b|; a point is core when at least ``min_pts``
    points (itself included) lie within ``eps``.

    Border points join the cluster of their nearest core point. Noise is
    listed in ``noise_indices`` and, with ``assign_noise``, labelled with the
    nearest cluster centre so every score still gets a band.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = _as_array(scores)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    counts = np.searchsorted(xs, xs + eps, side="right") - np.searchsorted(xs, xs - eps, side="left")
    core = counts >= min_pts
    sorted_labels = np.full(x.size, -1, dtype=int)
    core_pos = np.flatnonzero(core)
    if core_pos.size:
        new_cluster = np.ones(core_pos.size, dtype=int)
        new_cluster[1:] = (np.diff(xs[core_pos]) > eps).astype(int)
        sorted_labels[core_pos] = np.cumsum(new_cluster) - 1
        core_x = xs[core_pos]
        for p in np.flatnonzero(~core):
            j = np.searchsorted(core_x, xs[p])
            cand = [c for c in (j - 1, j) if 0 <= c < core_x.size and abs(core_x[c] - xs[p]) <= eps]
            if cand:
                best = min(cand, key=lambda c: (abs(core_x[c] - xs[p]), c))
                sorted_labels[p] = sorted_labels[core_pos[best]]
    labels = np.empty(x.size, dtype=int)
    labels[order] = sorted_labels
    noise = [int(i) for i in np.flatnonzero(labels < 0)]
    if (labels >= 0).any():
        labels, centers = _canonical(x, labels)
        if assign_noise and noise:
            c = np.asarray(centers)
            labels[noise] = np.argmin(np.abs(x[noise][:, None] - c[None, :]), axis=1)
    else:
        centers = []
    return ClusteringResult(labels, centers, ClusterMethod.DBSCAN, len(centers), noise,
                            params={"eps": eps, "min_pts": min_pts})


# -- Gaussian mixture ---------------------------------------------------------

VAR_FLOOR = 1e-9


def _log_normal_pdf(x, mean, var):
    return -0.5 * (np.log(2 * np.pi * var)[None, :] + (x[:, None] - mean[None, :]) ** 2 / var[None, :])


def gmm_1d(scores: Sequence[float], k: int, seed: int = 0, max_iter: int = 500,
           tol: float = 1e-10) -> ClusteringResult:
    """EM for a univariate Gaussian mixture, started from the k-means partition.

    Stops when the mean log-likelihood improves by less than ``tol``; points
    are hard-assigned to their most responsible component.
    """
    x = _as_array(scores)
    _check_k(x, k)
    init = kmeans_1d(x, k, seed=seed)
    labels = init.assignments
    n = x.size
    weights = np.array([(labels == c).mean() for c in range(k)])
    means = np.array([x[labels == c].mean() for c in range(k)])
    variances = np.maximum(np.array([x[labels == c].var() for c in range(k)]), VAR_FLOOR)
    trace = []
    prev = -math.inf
    for _ in range(max_iter):
        logp = _log_normal_pdf(x, means, variances) + np.log(np.maximum(weights, 1e-300))[None, :]
        mx = logp.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(logp - mx).sum(axis=1))
        ll = float(lse.mean())
        resp = np.exp(logp - lse[:, None])
        nk = resp.sum(axis=0)
        keep = nk > 1e-12
        weights = np.where(keep, nk / n, 0.0)
        safe = np.where(keep, nk, 1.0)
        means = np.where(keep, (resp * x[:, None]).sum(axis=0) / safe, means)
        variances = np.where(keep, (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / safe, variances)
        variances = np.maximum(variances, VAR_FLOOR)
        trace.append(ll)
        if ll - prev < tol:
            break
        prev = ll
    logp = _log_normal_pdf(x, means, variances) + np.log(np.maximum(weights, 1e-300))[None, :]
    hard = np.argmax(logp, axis=1)
    labels, centers = _canonical(x, hard, centers=means)
    used = np.unique(hard)
    order = used[np.argsort(means[used], kind="stable")]
    return ClusteringResult(labels, centers, ClusterMethod.GMM, len(centers),
                            params={"k": k, "seed": seed, "max_iter": max_iter, "tol": tol,
                                    "means": means[order].tolist(), "variances": variances[order].tolist(),
                                    "weights": weights[order].tolist(), "log_likelihood": trace})


# -- mean shift ---------------------------------------------------------------

def silverman_bandwidth(scores) -> float:
    x = _as_array(scores)
    s = float(x.std())
    if s == 0:
        return 1.0
    return 1.06 * s * x.size ** (-0.2)


def mean_shift_1d(scores: Sequence[float], bandwidth: float, max_iter: int = 300,
                  tol: float = 1e-6) -> ClusteringResult:
    """Flat-kernel mean shift. Each point climbs to the mean of the data within
    ``bandwidth``; converged modes closer than ``bandwidth / 2`` are merged.
    ``tol`` is relative to the bandwidth."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    x = _as_array(scores)
    xs = np.sort(x)
    csum = np.concatenate([[0.0], np.cumsum(xs)])
    y = x.copy()
    for _ in range(max_iter):
        lo = np.searchsorted(xs, y - bandwidth, side="left")
        hi = np.searchsorted(xs, y + bandwidth, side="right")
        new = (csum[hi] - csum[lo]) / (hi - lo)
        shift = np.max(np.abs(new - y))
        y = new
        if shift < tol * bandwidth:
            break
    order = np.argsort(y, kind="stable")
    ys = y[order]
    grp = np.concatenate([[0], np.cumsum(np.diff(ys) >= bandwidth / 2)])
    labels = np.empty(x.size, dtype=int)
    labels[order] = grp
    labels, centers = _canonical(x, labels)
    return ClusteringResult(labels, centers, ClusterMethod.MEANSHIFT, len(centers),
                            params={"bandwidth": bandwidth, "max_iter": max_iter, "tol": tol})


# -- model selection ----------------------------------------------------------

def silhouette(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mean silhouette coefficient for 1-D data via sorted prefix sums.

    Singleton clusters contribute 0.
    """
    x = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    ids = np.unique(labels)
    if ids.size < 2:
        raise ValueError("silhouette needs at least two clusters")
    mean_dist = np.empty((x.size, ids.size))
    sizes = np.empty(ids.size)
    for col, c in enumerate(ids):
        v = np.sort(x[labels == c])
        pre = np.concatenate([[0.0], np.cumsum(v)])
        below = np.searchsorted(v, x, side="right")
        total = (below * x - pre[below]) + (pre[-1] - pre[below] - (v.size - below) * x)
        sizes[col] = v.size
        mean_dist[:, col] = total
    own = np.searchsorted(ids, labels)
    rows = np.arange(x.size)
    own_size = sizes[own]
    a = np.where(own_size > 1, mean_dist[rows, own] / np.maximum(own_size - 1, 1), 0.0)
    other = mean_dist / sizes[None, :]
    other[rows, own] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own_size > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def select_partition(scores: Sequence[float], method=ClusterMethod.KMEANS,
                     params: dict[str, Any] | None = None) -> ClusteringResult:
    """Run ``method``; KMeans/GMM/Agglomerative without ``k`` pick the
    k in [2, 8] with the highest silhouette (smallest k on ties)."""
    method = ClusterMethod.parse(method)
    params = dict(params or {})
    x = _as_array(scores)
    seed = params.get("seed", 0)

    if method is ClusterMethod.DBSCAN:
        return dbscan_1d(x, params.get("eps", 0.5), params.get("min_pts", 5))
    if method is ClusterMethod.MEANSHIFT:
        bw = params.get("bandwidth") or silverman_bandwidth(x)
        return mean_shift_1d(x, bw, params.get("max_iter", 300), params.get("tol", 1e-6))

    def run(k):
        if method is ClusterMethod.KMEANS:
            return kmeans_1d(x, k, seed=seed, max_iter=params.get("max_iter", 300), tol=params.get("tol", 1e-6))
        if method is ClusterMethod.GMM:
            return gmm_1d(x, k, seed=seed, max_iter=params.get("max_iter", 500), tol=params.get("tol", 1e-10))
        return agglomerative_1d(x, k)

    if params.get("k"):
        return run(int(params["k"]))
    n_distinct = np.unique(x).size
    k_max = min(8, n_distinct, x.size - 1)
    if k_max < 2:
        return run(1)
    best, best_s = None, -math.inf
    silhouettes = {}
    for k in range(2, k_max + 1):
        res = run(k)
        if res.k < 2:
            continue
        s = silhouette(x, res.assignments)
        silhouettes[k] = s
        if s > best_s:
            best, best_s = res, s
    if best is None:
        return run(1)
    best.params["silhouette"] = silhouettes
    return best
