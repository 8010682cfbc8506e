"""PCA of entity embeddings to three coordinates, and nearest neighbours in
the original embedding space."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UnknownEntity
from .model import EmbeddingSpace


@dataclass
class Projection3D:
    labels: tuple[str, ...]
    coordinates: np.ndarray  # (n, 3)
    explained_variance: tuple[float, float, float]
    padded: bool = False
    method: str = "pca"

    def __getitem__(self, label: str) -> tuple[float, float, float]:
        try:
            return tuple(self.coordinates[self.labels.index(label)])
        except ValueError:
            raise UnknownEntity(label) from None


def pca_3d(space: EmbeddingSpace) -> Projection3D:
    """Top three principal directions of the centred entity matrix.

    Each direction is signed so its largest-magnitude component is positive.
    With fewer than three usable directions the missing coordinates are zero
    and ``padded`` is set.
    """
    X = np.asarray(space.entity_matrix, dtype=float)
    if X.shape[0] < 3:
        raise ValueError("PCA needs at least three entities")
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / X.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    k = min(3, X.shape[1])
    V = evecs[:, :k]
    pivot = np.argmax(np.abs(V), axis=0)
    V = V * np.where(V[pivot, np.arange(k)] < 0, -1.0, 1.0)
    coords = np.zeros((X.shape[0], 3))
    coords[:, :k] = Xc @ V
    total = evals.sum()
    frac = np.zeros(3)
    if total > 0:
        frac[:k] = evals[:k] / total
    return Projection3D(tuple(space.entity_labels), coords, tuple(float(f) for f in frac), padded=k < 3)


def neighborhood(entity, space: EmbeddingSpace, k: int) -> list[tuple[str, float]]:
    """``k`` nearest other entities by L2 distance, ties broken by label."""
    label = getattr(entity, "label", entity)
    i = space.entity_index(label)
    n = len(space.entity_labels)
    if not 0 < k < n:
        raise ValueError(f"k must be in [1, {n - 1}]")
    d = np.linalg.norm(space.entity_matrix - space.entity_matrix[i], axis=1)
    ranked = sorted((float(d[j]), lab) for j, lab in enumerate(space.entity_labels) if j != i)
    return [(lab, dist) for dist, lab in ranked[:k]]


def write_projection_csv(proj: Projection3D, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# method={proj.method}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity", "x", "y", "z"])
        for lab, row in zip(proj.labels, proj.coordinates):
            w.writerow([lab] + [repr(float(v)) for v in row])


def write_variance_json(proj: Projection3D, path) -> None:
    doc = {"method": proj.method, "explained_variance": list(proj.explained_variance), "padded": proj.padded}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_neighbors_csv(space: EmbeddingSpace, k: int, path) -> None:
    k = min(k, len(space.entity_labels) - 1)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity", "rank", "neighbor", "distance"])
        for lab in space.entity_labels:
            for r, (nb, d) in enumerate(neighborhood(lab, space, k), 1):
                w.writerow([lab, r, nb, repr(d)])
