"""Temporal encoding of pose-prototype trajectories.

Each pose frame is replaced by the (PCA-projected) weight of its best
matching pose neuron; ``q`` consecutive projections are concatenated, newest
first, into an action segment, and every segment is then tagged with the
object label vector of its sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gwr import GwrNetwork, bmu_indices


@dataclass
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray  # (d, D), orthonormal rows
    explained_variance_ratio: np.ndarray

    @property
    def n_components(self) -> int:
        return self.basis.shape[0]

    @property
    def input_dim(self) -> int:
        return self.basis.shape[1]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "basis": self.basis.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        mean = np.asarray(d["mean"], dtype=np.float64)
        basis = np.asarray(d["basis"], dtype=np.float64).reshape(-1, mean.size)
        return cls(mean, basis, np.asarray(d["explained_variance_ratio"], dtype=np.float64))


def fit_pca(vectors, variance_target: float = 0.9, max_dim: int = 10) -> PcaModel:
    """Principal axes of ``vectors`` (SVD of the centred data).

    Keeps the fewest components whose cumulative explained variance reaches
    ``variance_target``, but never more than ``max_dim``. Each axis is signed
    so that its largest-magnitude coordinate is positive.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two vectors")
    if max_dim < 1:
        raise ValueError("max_dim must be >= 1")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    var = s**2
    total = var.sum()
    ratio = var / total if total > 0 else np.zeros_like(var)
    cumulative = np.cumsum(ratio)
    d = int(np.searchsorted(cumulative, variance_target - 1e-12) + 1)
    d = max(1, min(d, max_dim, vt.shape[0]))

    basis = vt[:d].copy()
    for row in basis:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean, basis, ratio[:d])


def pca_project(pca: PcaModel, w) -> np.ndarray:
    """``basis @ (w - mean)``; accepts a single vector or rows of vectors."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape[-1] != pca.input_dim:
        raise ValueError(f"expected dimension {pca.input_dim}, got {w.shape[-1]}")
    return (w - pca.mean) @ pca.basis.T


def observed_runs(features) -> list[np.ndarray]:
    """Index runs of consecutive frames that have at least one observed value."""
    F = np.asarray(features, dtype=np.float64)
    keep = ~np.isnan(F).all(axis=1)
    runs, current = [], []
    for i, k in enumerate(keep):
        if k:
            current.append(i)
        elif current:
            runs.append(np.array(current))
            current = []
    if current:
        runs.append(np.array(current))
    return runs


def encode_trajectories(gwr_b: GwrNetwork, pca: PcaModel, features, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding-window action segments for one pose sequence.

    ``features`` is an (m, D) array with NaN for missing components. Fully
    missing frames are dropped and split the sequence; windows never span
    such a gap. Returns ``(segments, frame_index)`` where row ``u`` of
    ``segments`` is ``P(b(x_i)) ⊕ P(b(x_{i-1})) ⊕ … ⊕ P(b(x_{i-q+1}))``
    and ``frame_index[u] = i``.
    """
    if q < 1:
        raise ValueError("window width q must be >= 1")
    F = np.asarray(features, dtype=np.float64)
    runs = observed_runs(F)
    segments, index = [], []
    for run in runs:
        if run.size < q:
            continue
        best, _, _ = bmu_indices(gwr_b, F[run])
        projected = pca_project(pca, gwr_b._W[best])
        for t in range(q - 1, run.size):
            segments.append(projected[t - q + 1 : t + 1][::-1].ravel())
            index.append(run[t])
    if not segments:
        raise ValueError(f"sequence has no run of {q} consecutive usable frames")
    return np.array(segments), np.array(index)


def merge_object_labels(categories, n_categories: int) -> np.ndarray:
    """Multi-hot vector: the elementwise max of one-hot category codes."""
    cats = list(categories)
    if not cats:
        raise ValueError("at least one category is required")
    out = np.zeros(n_categories)
    for c in cats:
        if not 0 <= int(c) < n_categories:
            raise ValueError(f"category {c} outside [0, {n_categories})")
        out[int(c)] = 1.0
    return out


def build_integration_set(segments, label_vec, activity_label=None):
    """Append ``label_vec`` to every segment.

    Returns the action-object segments, plus a matching label array when
    ``activity_label`` is given.
    """
    S = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    if S.shape[0] == 0:
        raise ValueError("no segments")
    label_vec = np.asarray(label_vec, dtype=np.float64)
    phi = np.hstack([S, np.broadcast_to(label_vec, (S.shape[0], label_vec.size))])
    if activity_label is None:
        return phi
    return phi, np.full(S.shape[0], activity_label)
