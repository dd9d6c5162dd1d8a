"""Cross-validation splits and one-vs-rest classification metrics."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .labeling import UnclassifiableError

logger = logging.getLogger(__name__)

STRATEGIES = ("loso", "kfold")


@dataclass
class SplitPlan:
    strategy: str
    folds: list[tuple[np.ndarray, np.ndarray]]  # (train indices, test indices)
    fold_names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)

    def check(self, n_items: int) -> None:
        """Raise AssertionError unless the folds partition ``range(n_items)``."""
        seen = np.zeros(n_items, dtype=int)
        for train, test in self.folds:
            assert np.intersect1d(train, test).size == 0, "train and test overlap"
            assert np.union1d(train, test).size == n_items, "fold does not cover the dataset"
            seen[test] += 1
        assert np.all(seen == 1), "test sets do not partition the dataset"


def _subject_of(item) -> str:
    return str(getattr(item, "subject", item))


def make_splits(items, strategy: str = "loso", k: int | None = None, seed: int = 0) -> SplitPlan:
    """Fold plan over ``items``.

    ``items`` are records (anything with a ``subject`` attribute) or plain
    subject ids. ``loso`` holds out one subject per fold, subjects in sorted
    order; ``kfold`` shuffles with ``seed`` and cuts ``k`` near-equal folds.
    """
    items = list(items)
    n = len(items)
    if strategy == "loso":
        subjects = np.array([_subject_of(it) for it in items])
        names = sorted(set(subjects.tolist()))
        if len(names) < 2:
            raise ValueError("leave-one-subject-out needs at least two subjects")
        folds = [(np.flatnonzero(subjects != s), np.flatnonzero(subjects == s)) for s in names]
        return SplitPlan("loso", folds, names)
    if strategy == "kfold":
        if k is None or k < 2:
            raise ValueError("k-fold needs k >= 2")
        if k > n:
            raise ValueError(f"k = {k} exceeds the dataset size {n}")
        order = np.random.default_rng(seed).permutation(n)
        folds = []
        for part in np.array_split(order, k):
            test = np.sort(part)
            folds.append((np.setdiff1d(np.arange(n), test), test))
        return SplitPlan("kfold", folds, [f"fold{i}" for i in range(k)])
    raise ValueError(f"strategy must be one of {STRATEGIES}")


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predictions.

    ``rejected[c]`` counts class-``c`` sequences the model declined to
    classify; they count as errors but have no column.
    """

    counts: np.ndarray
    classes: list
    rejected: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum() + self.rejected.sum())


@dataclass
class MetricsReport:
    classes: list
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    excluded: np.ndarray  # classes never true and never predicted
    undefined_precision: np.ndarray
    undefined_recall: np.ndarray
    accuracy: float

    def _macro(self, values) -> float:
        keep = ~self.excluded
        return float(values[keep].mean()) if keep.any() else 0.0

    @property
    def macro_precision(self) -> float:
        return self._macro(self.precision)

    @property
    def macro_recall(self) -> float:
        return self._macro(self.recall)

    @property
    def macro_f1(self) -> float:
        return self._macro(self.f1)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def evaluate(true_labels, predicted_labels, class_universe) -> tuple[ConfusionMatrix, MetricsReport]:
    """Confusion matrix and per-class metrics.

    A prediction of ``None`` is a rejection: wrong, but not attributed to any
    predicted class. Zero denominators give 0 with an ``undefined_*`` flag;
    classes with no support and no predictions are left out of macro means.
    """
    classes = list(class_universe)
    if len(true_labels) != len(predicted_labels):
        raise ValueError("true and predicted label sequences differ in length")
    index = {c: i for i, c in enumerate(classes)}
    L = len(classes)
    counts = np.zeros((L, L), dtype=np.int64)
    rejected = np.zeros(L, dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        if t not in index:
            raise ValueError(f"true label {t!r} outside the class universe")
        if p is None:
            rejected[index[t]] += 1
            continue
        if p not in index:
            raise ValueError(f"predicted label {p!r} outside the class universe")
        counts[index[t], index[p]] += 1

    tp = np.diag(counts).astype(np.float64)
    predicted = counts.sum(axis=0).astype(np.float64)
    support = counts.sum(axis=1) + rejected
    precision = _ratio(tp, predicted)
    recall = _ratio(tp, support.astype(np.float64))
    f1 = _ratio(2 * precision * recall, precision + recall)
    total = counts.sum() + rejected.sum()
    report = MetricsReport(
        classes=classes,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        excluded=(support == 0) & (predicted == 0),
        undefined_precision=predicted == 0,
        undefined_recall=support == 0,
        accuracy=float(tp.sum() / total) if total else 0.0,
    )
    return ConfusionMatrix(counts, classes, rejected), report


@dataclass
class FoldResult:
    name: str
    test_ids: list[str]
    true: list[int]
    predicted: list  # int or None for rejections
    confusion: ConfusionMatrix
    metrics: MetricsReport
    seconds: float


@dataclass
class CrossValidationResult:
    folds: list[FoldResult]
    pooled_confusion: ConfusionMatrix
    pooled_metrics: MetricsReport

    @property
    def accuracy(self) -> float:
        return self.pooled_metrics.accuracy

    def mean_metrics(self) -> dict:
        keys = ("accuracy", "macro_precision", "macro_recall", "macro_f1")
        return {k: float(np.mean([f.metrics.as_dict()[k] for f in self.folds])) for k in keys}


def cross_validate(records, config=None, strategy="loso", k=None, seed=0, n_categories=None, n_activities=None):
    """Train and test the full architecture on every fold of a split plan."""
    from .pipeline import classify_activity, train_architecture

    records = list(records)
    n_categories = n_categories or 1 + max(c for r in records for c in r.categories)
    n_activities = n_activities or 1 + max(r.activity for r in records)
    universe = list(range(n_activities))
    plan = make_splits(records, strategy, k, seed)
    folds = []
    for name, (train, test) in zip(plan.fold_names, plan.folds):
        start = time.perf_counter()
        model = train_architecture([records[i] for i in train], config, n_categories, n_activities)
        true, pred = [], []
        for i in test:
            true.append(records[i].activity)
            try:
                pred.append(classify_activity(model, records[i])[0])
            except UnclassifiableError:
                logger.warning("%s: unclassifiable", records[i].sequence_id)
                pred.append(None)
        cm, rep = evaluate(true, pred, universe)
        seconds = time.perf_counter() - start
        logger.info("fold %s: accuracy %.3f (%.1f s)", name, rep.accuracy, seconds)
        folds.append(FoldResult(name, [records[i].sequence_id for i in test], true, pred, cm, rep, seconds))
    all_true = [t for f in folds for t in f.true]
    all_pred = [p for f in folds for p in f.predicted]
    cm, rep = evaluate(all_true, all_pred, universe)
    return CrossValidationResult(folds, cm, rep)


# -- CSV output -----------------------------------------------------------------


def write_metrics_csv(path, folds: list[tuple[str, MetricsReport]], class_names=None) -> None:
    """One row per (fold, class) plus a ``macro`` row carrying the accuracy."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fold", "class", "precision", "recall", "f1", "support", "excluded", "accuracy"])
        for name, rep in folds:
            for i, c in enumerate(rep.classes):
                label = class_names[c] if class_names else c
                w.writerow(
                    [name, label, rep.precision[i], rep.recall[i], rep.f1[i], int(rep.support[i]),
                     int(rep.excluded[i]), ""]
                )
            w.writerow(
                [name, "macro", rep.macro_precision, rep.macro_recall, rep.macro_f1, int(rep.support.sum()),
                 "", rep.accuracy]
            )


def write_confusion_csv(path, cm: ConfusionMatrix, class_names=None) -> None:
    names = [class_names[c] for c in cm.classes] if class_names else [str(c) for c in cm.classes]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\predicted", *names, "rejected"])
        for i, name in enumerate(names):
            w.writerow([name, *cm.counts[i].tolist(), int(cm.rejected[i])])


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
