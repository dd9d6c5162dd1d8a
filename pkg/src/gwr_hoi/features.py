"""Pose and object encoders.

Poses become two skeletal quads (hand and elbow expressed in a torso/neck
frame); objects become VLAD codes over a k-means codebook of local
descriptors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

JOINTS = (
    "head",
    "neck",
    "torso",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_hand",
    "right_hand",
)
JOINT_INDEX = {name: i for i, name in enumerate(JOINTS)}

QUADS = (
    ("torso", "neck", "left_hand", "left_elbow"),
    ("torso", "neck", "right_hand", "right_elbow"),
)
POSE_DIM = 6 * len(QUADS)

_AXIS = np.ones(3) / np.sqrt(3.0)
# Projection of the x axis onto the plane orthogonal to [1, 1, 1].
_REF = np.array([2.0, -1.0, -1.0]) / np.sqrt(6.0)
_TARGET_FRAME = np.column_stack([_AXIS, _REF, np.cross(_AXIS, _REF)])


class DegenerateQuadError(ValueError):
    """The first two joints of a quad coincide, so no local frame exists."""


def skeletal_quad(j1, j2, j3, j4, *, eps: float = 1e-12) -> np.ndarray:
    """Encode ``j3`` and ``j4`` in the similarity frame fixed by ``j1``, ``j2``.

    ``j1`` goes to the origin and ``j2`` to ``[1, 1, 1]``. The remaining spin
    about that axis is fixed by sending the component of ``j4`` orthogonal to
    the axis (or ``j3``'s, if ``j4`` lies on it) towards ``[2, -1, -1]``,
    which makes the result invariant to any rotation of the input.
    """
    j1, j2, j3, j4 = (np.asarray(j, dtype=np.float64) for j in (j1, j2, j3, j4))
    axis = j2 - j1
    length = np.linalg.norm(axis)
    if not np.isfinite(length) or length <= eps:
        raise DegenerateQuadError("j1 and j2 coincide")
    u = axis / length
    scale = np.sqrt(3.0) / length
    d3, d4 = j3 - j1, j4 - j1

    ref = None
    for d in (d4, d3):
        perp = d - np.dot(d, u) * u
        n = np.linalg.norm(perp)
        if n > 1e-9 * np.linalg.norm(d):
            ref = perp / n
            break
    if ref is None:
        # Both points lie on the axis; any spin gives the same coordinates.
        helper = np.eye(3)[int(np.argmin(np.abs(u)))]
        ref = helper - np.dot(helper, u) * u
        ref /= np.linalg.norm(ref)
    source = np.column_stack([u, ref, np.cross(u, ref)])
    rot = _TARGET_FRAME @ source.T
    return np.concatenate([scale * rot @ d3, scale * rot @ d4])


def pose_feature(positions, valid=None) -> tuple[np.ndarray, np.ndarray]:
    """12-d pose vector for one frame, with NaN where the quad is unusable.

    ``positions`` is a (9, 3) array in :data:`JOINTS` order and ``valid`` a
    per-joint boolean flag. Returns ``(vector, mask)``; a quad whose hand or
    elbow is missing is masked out, and a frame without torso or neck is
    fully masked.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != (len(JOINTS), 3):
        raise ValueError(f"expected ({len(JOINTS)}, 3) joint positions, got {positions.shape}")
    valid = np.ones(len(JOINTS), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    valid = valid & np.isfinite(positions).all(axis=1)

    out = np.full(POSE_DIM, np.nan)
    for k, quad in enumerate(QUADS):
        idx = [JOINT_INDEX[j] for j in quad]
        if not valid[idx].all():
            continue
        try:
            out[6 * k : 6 * k + 6] = skeletal_quad(*positions[idx])
        except DegenerateQuadError:
            pass
    return out, ~np.isnan(out)


def pose_features(positions, valid=None) -> np.ndarray:
    """Stack :func:`pose_feature` over a (m, 9, 3) sequence; NaN marks missing."""
    positions = np.asarray(positions, dtype=np.float64)
    if valid is None:
        valid = np.ones(positions.shape[:2], dtype=bool)
    return np.array([pose_feature(p, v)[0] for p, v in zip(positions, valid)]).reshape(-1, POSE_DIM)


# -- codebook -----------------------------------------------------------------


@dataclass
class Codebook:
    centroids: np.ndarray
    rng_seed: int = 0
    inertia_history: list[float] = field(default_factory=list)

    @property
    def n_words(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def assign(self, descriptors) -> np.ndarray:
        """Nearest centroid per descriptor; ties go to the lower index."""
        X = np.asarray(descriptors, dtype=np.float64)
        d2 = ((X[:, None, :] - self.centroids[None, :, :]) ** 2).sum(-1)
        return np.argmin(d2, axis=1)


def _sq_dist(X, c):
    return ((X - c) ** 2).sum(-1)


def fit_codebook(descriptors, n_words: int, seed: int = 0, max_iter: int = 100) -> Codebook:
    """Lloyd k-means started from greedy farthest-point seeding.

    The first seed is a random distinct descriptor; each further seed is the
    descriptor farthest from all chosen ones. Stops at an assignment
    fixpoint or after ``max_iter`` iterations.
    """
    X = np.asarray(descriptors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("descriptors must be a non-empty 2-D array")
    if n_words < 1:
        raise ValueError("n_words must be >= 1")
    distinct = np.unique(X, axis=0)
    if distinct.shape[0] < n_words:
        raise ValueError(f"need at least {n_words} distinct descriptors, got {distinct.shape[0]}")

    rng = np.random.default_rng(seed)
    centroids = np.empty((n_words, X.shape[1]))
    centroids[0] = distinct[rng.integers(distinct.shape[0])]
    nearest = _sq_dist(distinct, centroids[0])
    for k in range(1, n_words):
        centroids[k] = distinct[int(np.argmax(nearest))]
        nearest = np.minimum(nearest, _sq_dist(distinct, centroids[k]))

    book = Codebook(centroids, rng_seed=seed)
    labels = book.assign(X)
    for _ in range(max_iter):
        for k in range(n_words):
            members = labels == k
            if members.any():
                centroids[k] = X[members].mean(axis=0)
        book.inertia_history.append(float(_sq_dist(X, centroids[labels]).sum()))
        new_labels = book.assign(X)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return book


def vlad_encode(codebook: Codebook, descriptors) -> np.ndarray:
    """VLAD code: per-word residual sums, signed square root, then L2 norm."""
    X = np.asarray(descriptors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("descriptor set is empty")
    if X.shape[1] != codebook.dim:
        raise ValueError(f"descriptor dimension {X.shape[1]} != codebook dimension {codebook.dim}")
    # Canonical order makes the floating-point sums independent of input order.
    X = X[np.lexsort(X.T[::-1])]
    labels = codebook.assign(X)
    residuals = np.zeros_like(codebook.centroids)
    np.add.at(residuals, labels, X - codebook.centroids[labels])
    v = residuals.ravel()
    v = np.sign(v) * np.sqrt(np.abs(v))
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


class VladEncoder(TransformerMixin, BaseEstimator):
    """Fit a codebook on descriptor sets and map each set to a VLAD code.

    ``X`` is a sequence of (n_i, D) descriptor arrays, one per image.
    """

    def __init__(self, n_words=8, random_state=0, max_iter=100):
        self.n_words = n_words
        self.random_state = random_state
        self.max_iter = max_iter

    def fit(self, X, y=None):
        pooled = np.concatenate([np.asarray(d, dtype=np.float64) for d in X], axis=0)
        self.codebook_ = fit_codebook(pooled, self.n_words, self.random_state, self.max_iter)
        self.n_features_in_ = pooled.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "codebook_")
        return np.array([vlad_encode(self.codebook_, d) for d in X])
