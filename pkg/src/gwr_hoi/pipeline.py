"""Layer-wise training and inference of the full pose/object/integration stack.

    pose frames --quads--> GWR_b --PCA, windows--> action segments --+
                                                                     +--> GWR_a --> activity vote
    object descriptors --VLAD--> GWR_o --vote--> object label vector -+
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import SequenceRecord, median_downsample, preprocess
from .features import POSE_DIM, Codebook, fit_codebook, pose_features, vlad_encode
from .gwr import GwrNetwork, GwrParams, bmu_indices, train_network
from .labeling import LabelHistograms, UnclassifiableError, attach_labels, classify_sequence
from .temporal import PcaModel, build_integration_set, encode_trajectories, fit_pca, merge_object_labels

logger = logging.getLogger(__name__)

OBJECT_LABEL_MODES = ("predicted", "ground_truth", "none")
MISSING_OBJECT_MODES = ("error", "zero")


class SequenceTooShortError(ValueError):
    """A sequence has fewer usable frames than the window width."""


class MissingObjectError(ValueError):
    """A sequence carries no object descriptors."""


@dataclass
class ArchitectureConfig:
    pose: GwrParams = field(default_factory=lambda: GwrParams(insertion_threshold=0.98))
    objects: GwrParams = field(default_factory=lambda: GwrParams(insertion_threshold=0.98))
    integration: GwrParams = field(default_factory=lambda: GwrParams(insertion_threshold=0.9))
    window: int = 5
    pca_variance: float = 0.9
    pca_max_dim: int = 10
    codebook_size: int = 8
    codebook_seed: int = 0
    source_fps: float = 30.0
    downsample_window: int = 3
    mirror: bool = True
    normalize_pose: bool = True
    # Where the object block of each action-object segment comes from.
    object_labels: str = "predicted"
    # Inference-time handling of sequences without descriptors.
    missing_objects: str = "error"
    n_categories: int | None = None

    def __post_init__(self):
        for name in ("pose", "objects", "integration"):
            value = getattr(self, name)
            if isinstance(value, dict):
                setattr(self, name, GwrParams.from_dict(value))
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.n_categories is not None and self.n_categories < 1:
            raise ValueError("n_categories must be >= 1")
        if self.downsample_window < 1:
            raise ValueError("downsample_window must be >= 1")
        if self.object_labels not in OBJECT_LABEL_MODES:
            raise ValueError(f"object_labels must be one of {OBJECT_LABEL_MODES}")
        if self.missing_objects not in MISSING_OBJECT_MODES:
            raise ValueError(f"missing_objects must be one of {MISSING_OBJECT_MODES}")
        if not 0.0 < self.pca_variance <= 1.0:
            raise ValueError("pca_variance must lie in (0, 1]")

    @property
    def frame_rate(self) -> float:
        return self.source_fps / self.downsample_window

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for name in ("pose", "objects", "integration"):
            out[name] = out[name].to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureConfig":
        return cls(**d)


@dataclass
class TrainedModel:
    pose_net: GwrNetwork
    object_net: GwrNetwork
    integration_net: GwrNetwork
    pca: PcaModel
    codebook: Codebook
    object_histograms: LabelHistograms
    activity_histograms: LabelHistograms
    config: ArchitectureConfig
    pose_low: float
    pose_span: float
    n_categories: int
    n_activities: int

    def __post_init__(self):
        self.check_chain()

    def check_chain(self) -> None:
        """Raise ValueError unless layer dimensions agree with each other."""
        q, d, C = self.config.window, self.pca.n_components, self.n_categories
        problems = []
        if self.pose_net.input_dim != POSE_DIM:
            problems.append(f"pose net input {self.pose_net.input_dim} != {POSE_DIM}")
        if self.pca.input_dim != self.pose_net.input_dim:
            problems.append("PCA input dimension differs from the pose net")
        if self.object_net.input_dim != self.codebook.n_words * self.codebook.dim:
            problems.append(
                f"object net input {self.object_net.input_dim} != K*D = {self.codebook.n_words * self.codebook.dim}"
            )
        if self.integration_net.input_dim != q * d + C:
            problems.append(f"integration net input {self.integration_net.input_dim} != q*d + C = {q * d + C}")
        if self.object_histograms.n_classes != C:
            problems.append("object histograms do not cover every category")
        if self.activity_histograms.n_classes != self.n_activities:
            problems.append("activity histograms do not cover every activity")
        if problems:
            raise ValueError("inconsistent model: " + "; ".join(problems))

    def summary(self) -> dict:
        return {
            "pose_neurons": self.pose_net.n_neurons,
            "object_neurons": self.object_net.n_neurons,
            "integration_neurons": self.integration_net.n_neurons,
            "pose_dim": self.pose_net.input_dim,
            "pca_components": self.pca.n_components,
            "window": self.config.window,
            "n_categories": self.n_categories,
            "n_activities": self.n_activities,
            "object_dim": self.object_net.input_dim,
            "integration_dim": self.integration_net.input_dim,
        }


class IntegrationInput(NamedTuple):
    phi: np.ndarray
    frame_index: np.ndarray
    label_vector: np.ndarray
    object_fallback: bool


# -- building blocks ------------------------------------------------------------


def _normalize(F, low, span):
    return (F - low) / span


def _sequence_features(record: SequenceRecord, config: ArchitectureConfig, downsample: bool = True) -> np.ndarray:
    rec = median_downsample(record, config.downsample_window) if downsample else record
    return pose_features(rec.positions, rec.valid)


def _train_gwr(X, params: GwrParams) -> GwrNetwork:
    rng = np.random.default_rng(params.rng_seed)
    net = GwrNetwork.seeded(X, params, rng=rng)
    return train_network(net, X, rng=rng)


def _object_label_vector(model_or_parts, record: SequenceRecord, mode: str, missing: str):
    """Label vector for a record plus a flag telling whether a fallback was used."""
    object_net, histograms, codebook, C = model_or_parts
    if mode == "none":
        return np.zeros(C), False
    if not record.objects or any(o.descriptors.shape[0] == 0 for o in record.objects):
        if missing == "zero":
            logger.warning("%s: no object descriptors, using a zero label vector", record.sequence_id)
            return np.zeros(C), True
        raise MissingObjectError(f"{record.sequence_id}: no object descriptors")
    if mode == "ground_truth":
        return merge_object_labels(record.categories, C), False
    cats = []
    for obj in record.objects:
        code = vlad_encode(codebook, obj.descriptors)
        try:
            label, _ = classify_sequence(object_net, histograms, code[None, :])
        except UnclassifiableError:
            logger.warning("%s: object matched an unlabeled neuron", record.sequence_id)
            continue
        cats.append(label)
    if not cats:
        return np.zeros(C), True
    return merge_object_labels(cats, C), False


def train_architecture(
    records: list[SequenceRecord],
    config: ArchitectureConfig | None = None,
    n_categories: int | None = None,
    n_activities: int | None = None,
) -> TrainedModel:
    """Train the pose, object and integration layers in order.

    Every stage only consumes the frozen output of the previous ones.
    """
    config = config or ArchitectureConfig()
    if not records:
        raise ValueError("no training records")
    q = config.window
    C = config.n_categories or n_categories or 1 + max(c for r in records for c in r.categories)
    L = n_activities or 1 + max(r.activity for r in records)

    for r in records:
        if not r.objects or any(o.descriptors.shape[0] == 0 for o in r.objects):
            raise MissingObjectError(f"{r.sequence_id}: training sequence has no object descriptors")

    # Stage 1: pose layer.
    prepped = [(r, p) for r in records for p in preprocess(r, config.downsample_window, config.mirror)]
    features = []
    for _, p in prepped:
        F = pose_features(p.positions, p.valid)
        usable = ~np.isnan(F).all(axis=1)
        if usable.sum() < q:
            raise SequenceTooShortError(f"{p.sequence_id}: {int(usable.sum())} usable frames < window {q}")
        features.append(F)
    frames = np.concatenate([F[~np.isnan(F).all(axis=1)] for F in features])
    # One affine map for all coordinates keeps the feature geometry intact.
    low, span = 0.0, 1.0
    if config.normalize_pose:
        low = float(np.nanmin(frames))
        span = float(np.nanmax(frames)) - low or 1.0
    features = [_normalize(F, low, span) for F in features]
    pose_net = _train_gwr(_normalize(frames, low, span), config.pose)
    logger.info("pose layer: %d neurons", pose_net.n_neurons)

    # Stage 2: object layer.
    instances = [o for r in records for o in r.objects]
    codebook = fit_codebook(
        np.concatenate([o.descriptors for o in instances]), config.codebook_size, config.codebook_seed
    )
    codes = np.array([vlad_encode(codebook, o.descriptors) for o in instances])
    object_net = _train_gwr(codes, config.objects)
    object_hist = attach_labels(object_net, codes, [o.category for o in instances], C)
    logger.info("object layer: %d neurons", object_net.n_neurons)

    # Stage 3: reduce the pose prototypes.
    pca = fit_pca(pose_net.weights, config.pca_variance, config.pca_max_dim)

    # Stage 4: action-object segments.
    parts = (object_net, object_hist, codebook, C)
    label_cache = {}
    phis, ys = [], []
    for (orig, p), F in zip(prepped, features):
        if orig.sequence_id not in label_cache:
            label_cache[orig.sequence_id] = _object_label_vector(parts, orig, config.object_labels, "error")[0]
        segments, _ = encode_trajectories(pose_net, pca, F, q)
        phi, y = build_integration_set(segments, label_cache[orig.sequence_id], orig.activity)
        phis.append(phi)
        ys.append(y)
    T = np.concatenate(phis)
    y = np.concatenate(ys)

    # Stages 5 and 6: integration layer and its activity labels.
    integration_net = _train_gwr(T, config.integration)
    activity_hist = attach_labels(integration_net, T, y, L)
    logger.info("integration layer: %d neurons on %d segments", integration_net.n_neurons, T.shape[0])

    return TrainedModel(
        pose_net=pose_net,
        object_net=object_net,
        integration_net=integration_net,
        pca=pca,
        codebook=codebook,
        object_histograms=object_hist,
        activity_histograms=activity_hist,
        config=config,
        pose_low=low,
        pose_span=span,
        n_categories=C,
        n_activities=L,
    )


def integration_input(model: TrainedModel, record: SequenceRecord) -> IntegrationInput:
    """Action-object segments of one (raw, not yet downsampled) record."""
    cfg = model.config
    F = _normalize(_sequence_features(record, cfg), model.pose_low, model.pose_span)
    usable = int((~np.isnan(F).all(axis=1)).sum())
    if usable < cfg.window:
        raise SequenceTooShortError(f"{record.sequence_id}: {usable} usable frames < window {cfg.window}")
    try:
        segments, index = encode_trajectories(model.pose_net, model.pca, F, cfg.window)
    except ValueError as exc:
        raise SequenceTooShortError(f"{record.sequence_id}: {exc}") from None
    parts = (model.object_net, model.object_histograms, model.codebook, model.n_categories)
    label_vec, fallback = _object_label_vector(parts, record, cfg.object_labels, cfg.missing_objects)
    return IntegrationInput(build_integration_set(segments, label_vec), index, label_vec, fallback)


def classify_activity(model: TrainedModel, record: SequenceRecord):
    """Activity label and per-segment class scores for one sequence."""
    inp = integration_input(model, record)
    best, _, _ = bmu_indices(model.integration_net, inp.phi)
    per_segment = model.activity_histograms.lookup(model.integration_net)[best]
    total = per_segment.sum(axis=0)
    if not np.any(total > 0):
        raise UnclassifiableError(f"{record.sequence_id}: no labeled integration neuron matched")
    return int(np.argmax(total)), per_segment


class ActivationTrace(NamedTuple):
    activation: np.ndarray
    bmu_id: np.ndarray
    frame_index: np.ndarray


def activation_trace(model: TrainedModel, record: SequenceRecord) -> ActivationTrace:
    """Integration-layer bmu activity for each action-object segment."""
    inp = integration_input(model, record)
    best, _, dist = bmu_indices(model.integration_net, inp.phi)
    return ActivationTrace(np.exp(-dist), model.integration_net.ids[best], inp.frame_index)


def make_incongruent(record: SequenceRecord, replacement) -> SequenceRecord:
    """Copy of ``record`` whose objects are replaced; the pose is untouched.

    ``replacement`` is a list of :class:`ObjectInstance` (typically taken
    from another sequence) or a record to take them from.
    """
    objects = replacement.objects if isinstance(replacement, SequenceRecord) else list(replacement)
    if not objects:
        raise ValueError("replacement has no objects")
    if {o.category for o in objects} == set(record.categories):
        raise ValueError("replacement objects have the same categories as the original")
    return replace(record, objects=list(objects))


@dataclass
class CongruenceReport:
    sequence_ids: list[str]
    congruent_mean: np.ndarray
    incongruent_mean: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.congruent_mean - self.incongruent_mean

    @property
    def fraction_congruent_higher(self) -> float:
        return float(np.mean(self.difference > 0))


def congruence_compare(model: TrainedModel, congruent, incongruent) -> CongruenceReport:
    """Mean integration activation on each congruent/incongruent pair."""
    if len(congruent) != len(incongruent) or not congruent:
        raise ValueError("congruent and incongruent samples must be non-empty and paired")
    c_mean, i_mean = [], []
    for a, b in zip(congruent, incongruent):
        if not (np.array_equal(a.valid, b.valid) and np.array_equal(a.positions[a.valid], b.positions[b.valid])):
            raise ValueError(f"{a.sequence_id} and {b.sequence_id} do not share a pose sequence")
        c_mean.append(activation_trace(model, a).activation.mean())
        i_mean.append(activation_trace(model, b).activation.mean())
    return CongruenceReport([r.sequence_id for r in congruent], np.array(c_mean), np.array(i_mean))


class HOIClassifier(ClassifierMixin, BaseEstimator):
    """Estimator over :class:`SequenceRecord` lists.

    ``y`` defaults to the records' own activity labels. ``n_categories`` and
    ``n_activities`` fix the label universes when the training split does
    not contain every class.
    """

    def __init__(self, config=None, n_categories=None, n_activities=None):
        self.config = config
        self.n_categories = n_categories
        self.n_activities = n_activities

    def fit(self, X, y=None):
        records = list(X)
        if y is not None:
            records = [replace(r, activity=int(lbl)) for r, lbl in zip(records, y)]
        self.model_ = train_architecture(records, self.config, self.n_categories, self.n_activities)
        self.classes_ = np.arange(self.model_.n_activities)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return np.array([classify_activity(self.model_, r)[0] for r in X])

    def activation_trace(self, record) -> ActivationTrace:
        check_is_fitted(self, "model_")
        return activation_trace(self.model_, record)
