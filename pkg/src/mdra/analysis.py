"""Cluster summaries and low-dimensional embeddings of learned features."""

from __future__ import annotations

import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np


@dataclass
class ClusterReport:
    assignments: np.ndarray
    masses: np.ndarray
    purity: float | None = None
    embedding: np.ndarray | None = None

    def to_dict(self):
        d = {
            "assignments": self.assignments.tolist(),
            "masses": self.masses.tolist(),
        }
        if self.purity is not None:
            d["purity"] = float(self.purity)
        if self.embedding is not None:
            d["embedding"] = self.embedding.tolist()
        return d


def assign_and_mass(R):
    """Argmax cluster per row (ties to the lowest index) and column means."""
    R = np.asarray(R, dtype=np.float64)
    return np.argmax(R, axis=1), R.mean(axis=0)


def purity(assignments, labels):
    """Fraction of points carrying their cluster's majority label."""
    assignments = list(assignments)
    labels = list(labels)
    if len(assignments) != len(labels):
        raise ValueError("assignments and labels differ in length")
    if not assignments:
        raise ValueError("purity of an empty assignment is undefined")
    groups = defaultdict(Counter)
    for a, lab in zip(assignments, labels):
        groups[a][lab] += 1
    return sum(max(c.values()) for c in groups.values()) / len(assignments)


def real_features(points):
    """Complex rows become ``[Re, Im]``; real rows pass through."""
    points = np.asarray(points)
    if np.iscomplexobj(points):
        return np.concatenate([points.real, points.imag], axis=-1)
    return points.astype(np.float64)


def classical_mds(points, m=2):
    """Torgerson embedding of Euclidean distances between rows of ``points``.

    Double-centres the squared-distance matrix and scales the top ``m``
    eigenvectors by the square roots of their eigenvalues.  Each axis is
    flipped so that its first nonzero coordinate is positive.  When fewer than
    ``m`` eigenvalues are positive the missing axes are zero and a warning is
    emitted.
    """
    X = real_features(points)
    if X.ndim == 1:
        X = X[:, None]
    N = X.shape[0]
    if not N >= m >= 1:
        raise ValueError(f"need N >= m >= 1, got N={N}, m={m}")
    sq = np.sum(X * X, axis=1)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    J = np.eye(N) - 1.0 / N
    B = -0.5 * J @ D2 @ J
    B = 0.5 * (B + B.T)
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1][:m]
    evals, evecs = evals[order], evecs[:, order]
    scale = max(1.0, float(np.abs(B).max()))
    positive = evals > 1e-10 * scale
    if positive.sum() < m:
        warnings.warn(
            f"only {int(positive.sum())} positive eigenvalues; padding to {m} axes",
            RuntimeWarning,
            stacklevel=2,
        )
    Y = np.zeros((N, m))
    Y[:, positive] = evecs[:, positive] * np.sqrt(evals[positive])
    for j in range(m):
        nz = np.flatnonzero(np.abs(Y[:, j]) > 1e-12)
        if nz.size and Y[nz[0], j] < 0:
            Y[:, j] = -Y[:, j]
    return Y


def rgb_from_embedding(Y):
    """Min-max scale the first three axes of an embedding to ``[0, 1]``."""
    Y = np.asarray(Y, dtype=np.float64)[:, :3]
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return (Y - lo) / span


def cluster_report(R, labels=None, features=None, m=2):
    assignments, masses = assign_and_mass(R)
    p = None
    if labels is not None and all(lab is not None for lab in labels):
        p = purity(assignments, labels)
    emb = classical_mds(features, m) if features is not None else None
    return ClusterReport(assignments, masses, p, emb)


def write_embedding_tsv(path, ids, Y, assignments, labels=None):
    with open(path, "w") as fh:
        cols = ["id"] + [f"x{j}" for j in range(Y.shape[1])] + ["assignment"]
        if labels is not None:
            cols.append("label")
        fh.write("\t".join(cols) + "\n")
        for i, n in enumerate(ids):
            row = [str(n)] + [repr(float(v)) for v in Y[i]] + [str(int(assignments[i]))]
            if labels is not None:
                row.append(str(labels[i]))
            fh.write("\t".join(row) + "\n")


def write_masses_tsv(path, masses):
    with open(path, "w") as fh:
        fh.write("cluster\tmass\n")
        for k, v in enumerate(masses):
            fh.write(f"{k}\t{float(v)!r}\n")


def write_rgb_tsv(path, ids, Y):
    """``id, x, y, z, r, g, b`` rows for a three-axis embedding."""
    Y3 = np.zeros((len(ids), 3))
    Y3[:, : min(3, Y.shape[1])] = Y[:, :3]
    rgb = rgb_from_embedding(Y3)
    with open(path, "w") as fh:
        fh.write("id\tx\ty\tz\tr\tg\tb\n")
        for i, n in enumerate(ids):
            vals = list(Y3[i]) + list(rgb[i])
            fh.write("\t".join([str(n)] + [repr(float(v)) for v in vals]) + "\n")
