"""Majority-vote labeling of trained GWR neurons.

Labels never touch the network itself: after training, one pass over the
labeled data records which classes each neuron wins, and those counts are
rescaled by inverse class frequency and inverse neuron firing frequency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .gwr import GrowWhenRequired, GwrNetwork, bmu_indices


class UnclassifiableError(ValueError):
    """None of the matched neurons carries a label histogram."""


@dataclass
class LabelHistograms:
    """Per-neuron class histograms for a frozen network.

    ``neuron_ids[i]`` owns row ``i`` of ``counts`` and ``normalized``; only
    neurons that won at least one labeled sample appear.
    """

    neuron_ids: np.ndarray
    counts: np.ndarray  # raw hist(c, n), shape (n_labeled, n_classes)
    class_frequency: np.ndarray  # f_c
    activation_frequency: np.ndarray  # f_a per labeled neuron
    normalized: np.ndarray  # H

    @property
    def n_classes(self) -> int:
        return self.counts.shape[1]

    def lookup(self, net: GwrNetwork) -> np.ndarray:
        """Histogram row for every live neuron of ``net`` (zeros if unlabeled)."""
        table = np.zeros((net.n_neurons, self.n_classes))
        pos = np.searchsorted(net.ids, self.neuron_ids)
        table[pos] = self.normalized
        return table

    def scaled(self, factor: float) -> "LabelHistograms":
        return LabelHistograms(
            self.neuron_ids.copy(),
            self.counts.copy(),
            self.class_frequency.copy(),
            self.activation_frequency.copy(),
            self.normalized * factor,
        )

    def to_dict(self) -> dict:
        return {
            "neuron_ids": self.neuron_ids.tolist(),
            "counts": self.counts.tolist(),
            "class_frequency": self.class_frequency.tolist(),
            "activation_frequency": self.activation_frequency.tolist(),
            "normalized": self.normalized.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelHistograms":
        n_classes = len(d["class_frequency"])
        return cls(
            np.asarray(d["neuron_ids"], dtype=np.int64),
            np.asarray(d["counts"], dtype=np.float64).reshape(-1, n_classes),
            np.asarray(d["class_frequency"], dtype=np.float64),
            np.asarray(d["activation_frequency"], dtype=np.float64),
            np.asarray(d["normalized"], dtype=np.float64).reshape(-1, n_classes),
        )


def normalize_counts(counts, class_frequency, activation_frequency) -> np.ndarray:
    """``hist(c, n) / (f_c * f_a,n)``, with zero where ``f_c`` is zero."""
    counts = np.asarray(counts, dtype=np.float64)
    fc = np.asarray(class_frequency, dtype=np.float64)
    fa = np.asarray(activation_frequency, dtype=np.float64)
    denom = fa[:, None] * fc[None, :]
    return np.divide(counts, denom, out=np.zeros_like(counts), where=denom > 0)


def attach_labels(net: GwrNetwork, X, y, n_classes: int | None = None, masks=None) -> LabelHistograms:
    """Label histograms from one pass of ``(X, y)`` over the frozen ``net``.

    ``y`` holds integer class indices in ``[0, n_classes)``.
    """
    y = np.asarray(y, dtype=np.int64)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("empty labeled data")
    if y.shape[0] != X.shape[0]:
        raise ValueError("X and y lengths differ")
    n_classes = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError("class index out of range")

    best, _, _ = bmu_indices(net, X, masks)
    raw = np.zeros((net.n_neurons, n_classes))
    np.add.at(raw, (best, y), 1.0)
    fired = np.flatnonzero(raw.sum(axis=1) > 0)
    counts = raw[fired]
    class_frequency = np.bincount(y, minlength=n_classes).astype(np.float64)
    activation_frequency = counts.sum(axis=1)
    return LabelHistograms(
        neuron_ids=net.ids[fired],
        counts=counts,
        class_frequency=class_frequency,
        activation_frequency=activation_frequency,
        normalized=normalize_counts(counts, class_frequency, activation_frequency),
    )


def classify_sequence(net: GwrNetwork, histograms: LabelHistograms, segments, masks=None):
    """Sum the histograms of each segment's best-matching neuron.

    Returns ``(label, scores)``; ties go to the lowest class index. With a
    single segment this is a plain single-neuron vote.
    """
    S = np.atleast_2d(np.asarray(segments, dtype=np.float64))
    if S.shape[0] == 0:
        raise ValueError("no segments to classify")
    best, _, _ = bmu_indices(net, S, masks)
    per_segment = histograms.lookup(net)[best]
    scores = per_segment.sum(axis=0)
    if not np.any(scores > 0):
        raise UnclassifiableError("no labeled neuron matched any segment")
    return int(np.argmax(scores)), scores


class LabeledGWR(ClassifierMixin, GrowWhenRequired):
    """Unsupervised GWR with post-hoc majority-vote labels.

    ``fit`` trains the network without looking at ``y``, then attaches the
    label histograms on the frozen network. ``predict`` votes per sample;
    :meth:`predict_sequence` votes over a whole sequence of samples.
    """

    def fit(self, X, y, mask=None):
        y = np.asarray(y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        super().fit(X, mask=mask)
        self.histograms_ = attach_labels(self.network_, X, y_idx, len(self.classes_), mask)
        return self

    def predict_scores(self, X, mask=None) -> np.ndarray:
        check_is_fitted(self, "histograms_")
        best, _, _ = bmu_indices(self.network_, X, mask)
        return self.histograms_.lookup(self.network_)[best]

    def predict(self, X, mask=None) -> np.ndarray:
        scores = self.predict_scores(X, mask)
        if np.any(~(scores > 0).any(axis=1)):
            raise UnclassifiableError("a sample matched an unlabeled neuron")
        return self.classes_[np.argmax(scores, axis=1)]

    def predict_sequence(self, X, mask=None):
        check_is_fitted(self, "histograms_")
        label, scores = classify_sequence(self.network_, self.histograms_, X, mask)
        return self.classes_[label], scores
