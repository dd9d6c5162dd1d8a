"""Checksummed JSON model files.

Layout: one JSON document, a newline, then ``sha256:<hex digest of the JSON
bytes>``. Files are written to a temporary sibling and renamed into place.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .data import write_json_atomic
from .features import Codebook
from .gwr import GwrNetwork
from .labeling import LabelHistograms
from .pipeline import ArchitectureConfig, TrainedModel
from .temporal import PcaModel

MODEL_FORMAT_VERSION = 1
_CHECKSUM_PREFIX = "sha256:"


class ModelFileError(ValueError):
    """A model file cannot be read."""


class ChecksumError(ModelFileError):
    """The stored checksum is missing or does not match the content."""


class UnsupportedVersionError(ModelFileError):
    """The file was written with a format version this code cannot read."""


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "n_categories": model.n_categories,
        "n_activities": model.n_activities,
        "pose_low": model.pose_low,
        "pose_span": model.pose_span,
        "pose_net": model.pose_net.state_dict(),
        "object_net": model.object_net.state_dict(),
        "integration_net": model.integration_net.state_dict(),
        "pca": model.pca.to_dict(),
        "codebook": {
            "centroids": model.codebook.centroids.tolist(),
            "rng_seed": model.codebook.rng_seed,
            "inertia_history": list(model.codebook.inertia_history),
        },
        "object_histograms": model.object_histograms.to_dict(),
        "activity_histograms": model.activity_histograms.to_dict(),
    }


def model_from_dict(d: dict) -> TrainedModel:
    version = d.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported model format_version {version!r}")
    cb = d["codebook"]
    return TrainedModel(
        pose_net=GwrNetwork.from_state_dict(d["pose_net"]),
        object_net=GwrNetwork.from_state_dict(d["object_net"]),
        integration_net=GwrNetwork.from_state_dict(d["integration_net"]),
        pca=PcaModel.from_dict(d["pca"]),
        codebook=Codebook(np.asarray(cb["centroids"], dtype=np.float64), cb["rng_seed"], list(cb["inertia_history"])),
        object_histograms=LabelHistograms.from_dict(d["object_histograms"]),
        activity_histograms=LabelHistograms.from_dict(d["activity_histograms"]),
        config=ArchitectureConfig.from_dict(d["config"]),
        pose_low=float(d["pose_low"]),
        pose_span=float(d["pose_span"]),
        n_categories=int(d["n_categories"]),
        n_activities=int(d["n_activities"]),
    )


def dumps_model(model: TrainedModel) -> str:
    body = json.dumps(model_to_dict(model), separators=(",", ":"))
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    return f"{body}\n{_CHECKSUM_PREFIX}{digest}\n"


def loads_model(text: str) -> TrainedModel:
    body, sep, trailer = text.rstrip("\n").rpartition("\n")
    if not sep or not trailer.startswith(_CHECKSUM_PREFIX):
        raise ChecksumError("model file has no checksum line (truncated?)")
    if hashlib.sha256(body.encode("utf-8")).hexdigest() != trailer[len(_CHECKSUM_PREFIX):]:
        raise ChecksumError("model checksum mismatch")
    try:
        d = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model body is not valid JSON: {exc}") from None
    return model_from_dict(d)


def save_model(model: TrainedModel, path) -> None:
    write_json_atomic(path, dumps_model(model))


def load_model(path) -> TrainedModel:
    p = Path(path)
    if not p.is_file():
        raise ModelFileError(f"no model file at {p}")
    return loads_model(p.read_text(encoding="utf-8"))


def model_roundtrip(model: TrainedModel, path) -> TrainedModel:
    save_model(model, path)
    return load_model(path)


def models_equal(a: TrainedModel, b: TrainedModel) -> bool:
    """Bit-level equality of everything a model file stores."""
    return dumps_model(a) == dumps_model(b)
