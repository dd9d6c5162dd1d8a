"""Sequence records, dataset files and preprocessing.

A dataset is a directory holding ``manifest.json`` plus one JSON file per
sequence. Joint coordinates of invalid joints are written as ``null``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .features import JOINT_INDEX, JOINTS

DATASET_FORMAT_VERSION = 1
MIRROR_SUFFIX = "~mirror"

_MIRROR_PERMUTATION = np.array(
    [
        JOINT_INDEX[name.replace("left_", "tmp_").replace("right_", "left_").replace("tmp_", "right_")]
        for name in JOINTS
    ]
)


class DatasetError(ValueError):
    """A dataset file is missing, malformed or inconsistent."""


@dataclass
class ObjectInstance:
    category: int
    descriptors: np.ndarray  # (n, D)

    def __eq__(self, other):
        return (
            isinstance(other, ObjectInstance)
            and self.category == other.category
            and np.array_equal(self.descriptors, other.descriptors)
        )


@dataclass
class SequenceRecord:
    sequence_id: str
    subject: str
    activity: int
    positions: np.ndarray  # (m, 9, 3), metres
    valid: np.ndarray  # (m, 9) bool
    timestamps: np.ndarray  # (m,)
    objects: list[ObjectInstance] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def categories(self) -> list[int]:
        return [o.category for o in self.objects]

    def __eq__(self, other):
        return (
            isinstance(other, SequenceRecord)
            and self.sequence_id == other.sequence_id
            and self.subject == other.subject
            and self.activity == other.activity
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.positions[self.valid], other.positions[other.valid])
            and np.array_equal(self.timestamps, other.timestamps)
            and self.objects == other.objects
        )

    def to_dict(self) -> dict:
        pos = np.where(self.valid[..., None], self.positions, np.nan)
        return {
            "sequence_id": self.sequence_id,
            "subject": self.subject,
            "activity": int(self.activity),
            "timestamps": self.timestamps.tolist(),
            "joints": list(JOINTS),
            "positions": [[None if np.isnan(p).any() else p.tolist() for p in frame] for frame in pos],
            "objects": [{"category": int(o.category), "descriptors": o.descriptors.tolist()} for o in self.objects],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceRecord":
        if list(d.get("joints", JOINTS)) != list(JOINTS):
            raise DatasetError(f"{d.get('sequence_id')}: unexpected joint list")
        frames = d["positions"]
        positions = np.full((len(frames), len(JOINTS), 3), np.nan)
        for t, frame in enumerate(frames):
            if len(frame) != len(JOINTS):
                raise DatasetError(f"{d['sequence_id']}: frame {t} has {len(frame)} joints")
            for j, p in enumerate(frame):
                if p is not None:
                    positions[t, j] = p
        valid = ~np.isnan(positions).any(axis=2)
        return cls(
            sequence_id=str(d["sequence_id"]),
            subject=str(d["subject"]),
            activity=int(d["activity"]),
            positions=positions,
            valid=valid,
            timestamps=np.asarray(d["timestamps"], dtype=np.float64),
            objects=[
                ObjectInstance(int(o["category"]), np.atleast_2d(np.asarray(o["descriptors"], dtype=np.float64)))
                for o in d["objects"]
            ],
        )


@dataclass
class DatasetManifest:
    categories: list[str]
    activities: list[str]
    descriptor_dim: int
    sequences: list[str] = field(default_factory=list)
    format_version: int = DATASET_FORMAT_VERSION

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def n_activities(self) -> int:
        return len(self.activities)

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "categories": self.categories,
            "activities": self.activities,
            "descriptor_dim": self.descriptor_dim,
            "sequences": self.sequences,
        }


def validate_record(record: SequenceRecord, manifest: DatasetManifest) -> None:
    rid = record.sequence_id
    m = record.n_frames
    if record.positions.shape != (m, len(JOINTS), 3) or record.valid.shape != (m, len(JOINTS)):
        raise DatasetError(f"{rid}: joint arrays have the wrong shape")
    if record.timestamps.shape != (m,):
        raise DatasetError(f"{rid}: timestamp count differs from frame count")
    if m and np.any(np.diff(record.timestamps) <= 0):
        raise DatasetError(f"{rid}: frames are not time-ordered")
    if not np.isfinite(record.positions[record.valid]).all():
        raise DatasetError(f"{rid}: non-finite coordinates on valid joints")
    if not 0 <= record.activity < manifest.n_activities:
        raise DatasetError(f"{rid}: activity {record.activity} out of range")
    for obj in record.objects:
        if not 0 <= obj.category < manifest.n_categories:
            raise DatasetError(f"{rid}: object category {obj.category} out of range")
        if obj.descriptors.ndim != 2 or obj.descriptors.shape[1] != manifest.descriptor_dim:
            raise DatasetError(
                f"{rid}: descriptor dimension {obj.descriptors.shape[-1]} != {manifest.descriptor_dim}"
            )


def save_dataset(path, manifest: DatasetManifest, records: list[SequenceRecord]) -> DatasetManifest:
    """Write ``records`` under ``path``; returns the manifest as written."""
    root = Path(path)
    (root / "sequences").mkdir(parents=True, exist_ok=True)
    refs = []
    for rec in records:
        validate_record(rec, manifest)
        rel = f"sequences/{rec.sequence_id}.json"
        with open(root / rel, "w", encoding="utf-8") as fh:
            json.dump(rec.to_dict(), fh)
        refs.append(rel)
    manifest = replace(manifest, sequences=refs)
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=1)
    return manifest


def load_dataset(path) -> tuple[DatasetManifest, list[SequenceRecord]]:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetError(f"no manifest.json in {root}")
    with open(manifest_path, encoding="utf-8") as fh:
        raw = json.load(fh)
    version = raw.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise DatasetError(f"unsupported dataset format_version {version!r}")
    manifest = DatasetManifest(
        categories=list(raw["categories"]),
        activities=list(raw["activities"]),
        descriptor_dim=int(raw["descriptor_dim"]),
        sequences=list(raw["sequences"]),
        format_version=version,
    )
    records = []
    for rel in manifest.sequences:
        file = root / rel
        if not file.is_file():
            raise DatasetError(f"missing sequence file {rel}")
        with open(file, encoding="utf-8") as fh:
            rec = SequenceRecord.from_dict(json.load(fh))
        validate_record(rec, manifest)
        records.append(rec)
    return manifest, records


# -- preprocessing --------------------------------------------------------------


def median_downsample(record: SequenceRecord, window: int) -> SequenceRecord:
    """Per-coordinate median over consecutive non-overlapping windows.

    A joint is valid in the output when at least half of the window's frames
    had it valid; the median is taken over those valid frames only. A short
    trailing window is kept.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    m = record.n_frames
    if m == 0:
        raise ValueError(f"{record.sequence_id}: no frames")
    if window == 1:
        return replace(record, positions=record.positions.copy(), valid=record.valid.copy())
    starts = range(0, m, window)
    positions = np.full((len(starts), len(JOINTS), 3), np.nan)
    valid = np.zeros((len(starts), len(JOINTS)), dtype=bool)
    stamps = np.empty(len(starts))
    for k, s in enumerate(starts):
        chunk = slice(s, min(s + window, m))
        pos, ok = record.positions[chunk], record.valid[chunk]
        n = pos.shape[0]
        stamps[k] = np.median(record.timestamps[chunk])
        for j in range(len(JOINTS)):
            if 2 * ok[:, j].sum() >= n:
                positions[k, j] = np.median(pos[ok[:, j], j], axis=0)
                valid[k, j] = True
    return replace(record, positions=positions, valid=valid, timestamps=stamps)


def mirror_record(record: SequenceRecord) -> SequenceRecord:
    """Negate x and swap left/right joints; applying it twice is the identity."""
    positions = record.positions[:, _MIRROR_PERMUTATION].copy()
    positions[..., 0] *= -1.0
    sid = record.sequence_id
    sid = sid[: -len(MIRROR_SUFFIX)] if sid.endswith(MIRROR_SUFFIX) else sid + MIRROR_SUFFIX
    return replace(
        record,
        sequence_id=sid,
        positions=positions,
        valid=record.valid[:, _MIRROR_PERMUTATION].copy(),
        timestamps=record.timestamps.copy(),
    )


def preprocess(record: SequenceRecord, downsample_window: int = 3, mirror: bool = False) -> list[SequenceRecord]:
    """Downsample, and optionally append a mirrored copy."""
    out = [median_downsample(record, downsample_window)]
    if mirror:
        out.append(mirror_record(out[0]))
    return out


def write_json_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
