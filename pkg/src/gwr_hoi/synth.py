"""Seeded synthetic human-object interaction datasets.

Poses follow piecewise-linear keypose trajectories with per-subject
similarity distortion, tempo and style, plus Gaussian jitter. Each object
category has a few fixed views, each a template set of local descriptors
drawn around the category's modes; an image is a template plus small
Gaussian jitter. Activities
that name the same trajectory are pose-identical and differ only in their
objects.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import DatasetManifest, ObjectInstance, SequenceRecord, validate_record
from .features import JOINT_INDEX, JOINTS

BASE_POSE = {
    "head": [0.0, 0.62, 0.0],
    "neck": [0.0, 0.45, 0.0],
    "torso": [0.0, 0.15, 0.0],
    "left_shoulder": [-0.18, 0.42, 0.0],
    "right_shoulder": [0.18, 0.42, 0.0],
    "left_elbow": [-0.22, 0.15, 0.03],
    "right_elbow": [0.22, 0.15, 0.03],
    "left_hand": [-0.22, -0.1, -0.05],
    "right_hand": [0.22, -0.1, -0.05],
}


@dataclass
class Keypose:
    pose: dict[str, list[float]]  # joint overrides of the base pose
    frames: int = 0  # interpolation frames from the previous keypose


@dataclass
class ActivitySpec:
    name: str
    trajectory: str
    categories: list[str]


@dataclass
class CategorySpec:
    name: str
    modes: list[list[float]]
    sigma: float = 0.05


@dataclass
class SynthSpec:
    trajectories: dict[str, list[Keypose]]
    activities: list[ActivitySpec]
    categories: list[CategorySpec]
    base_pose: dict[str, list[float]] = field(default_factory=lambda: {k: list(v) for k, v in BASE_POSE.items()})
    subjects: int = 6
    repetitions: int = 3
    scale_range: tuple[float, float] = (0.85, 1.15)
    yaw_range_deg: float = 25.0
    offset_range: float = 0.3
    distance: float = 2.0
    tempo_range: tuple[float, float] = (0.8, 1.25)
    style_sigma: float = 0.01
    pose_noise: float = 0.002
    joint_dropout: float = 0.0
    views_per_instance: int = 4
    images_per_object: int = 3
    image_noise: float = 0.003
    descriptors_per_image: int = 40
    fps: float = 30.0
    seed: int = 0

    def __post_init__(self):
        self.trajectories = {
            name: [kp if isinstance(kp, Keypose) else Keypose(**kp) for kp in kps]
            for name, kps in self.trajectories.items()
        }
        self.activities = [a if isinstance(a, ActivitySpec) else ActivitySpec(**a) for a in self.activities]
        self.categories = [c if isinstance(c, CategorySpec) else CategorySpec(**c) for c in self.categories]
        self.scale_range = tuple(self.scale_range)
        self.tempo_range = tuple(self.tempo_range)
        self.validate()

    @property
    def category_names(self) -> list[str]:
        return [c.name for c in self.categories]

    @property
    def descriptor_dim(self) -> int:
        return len(self.categories[0].modes[0])

    def validate(self) -> None:
        names = set(self.category_names)
        if len(names) != len(self.categories):
            raise ValueError("duplicate category names")
        for a in self.activities:
            if a.trajectory not in self.trajectories:
                raise ValueError(f"activity {a.name!r} references unknown trajectory {a.trajectory!r}")
            if not a.categories or not set(a.categories) <= names:
                raise ValueError(f"activity {a.name!r} references unknown categories {a.categories}")
        for name, kps in self.trajectories.items():
            if not kps:
                raise ValueError(f"trajectory {name!r} is empty")
            for kp in kps:
                unknown = set(kp.pose) - set(JOINTS)
                if unknown:
                    raise ValueError(f"trajectory {name!r} names unknown joints {sorted(unknown)}")
                if kp.frames < 0:
                    raise ValueError("keypose frame counts must be non-negative")
        dims = {len(m) for c in self.categories for m in c.modes}
        if len(dims) != 1:
            raise ValueError("all descriptor modes must share one dimension")
        for value, label in [
            (self.pose_noise, "pose_noise"),
            (self.style_sigma, "style_sigma"),
            (self.image_noise, "image_noise"),
            *[(c.sigma, f"sigma of {c.name}") for c in self.categories],
        ]:
            if value < 0:
                raise ValueError(f"{label} must be >= 0")
        if min(self.subjects, self.repetitions, self.descriptors_per_image, self.images_per_object) < 1:
            raise ValueError("subjects, repetitions, descriptors_per_image and images_per_object must be positive")
        if not 0.0 <= self.joint_dropout < 1.0:
            raise ValueError("joint_dropout must lie in [0, 1)")

    def incongruent_categories(self, activity: int) -> list[int]:
        """Categories never shown with this activity's body motion."""
        traj = self.activities[activity].trajectory
        seen = {c for a in self.activities if a.trajectory == traj for c in a.categories}
        return [i for i, c in enumerate(self.categories) if c.name not in seen]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SynthSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")


def _yaw(deg: float) -> np.ndarray:
    t = np.deg2rad(deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _keypose_array(base: dict, overrides: dict) -> np.ndarray:
    pose = np.array([base[j] for j in JOINTS], dtype=np.float64)
    for joint, xyz in overrides.items():
        pose[JOINT_INDEX[joint]] = xyz
    return pose


def _trajectory(spec: SynthSpec, name: str, tempo: float, style: np.ndarray) -> np.ndarray:
    """Noise-free (m, 9, 3) trajectory in body coordinates."""
    keys = spec.trajectories[name]
    poses = [_keypose_array(spec.base_pose, kp.pose) + style for kp in keys]
    frames = [poses[0][None]]
    for prev, cur, kp in zip(poses, poses[1:], keys[1:]):
        n = max(1, int(round(kp.frames * tempo)))
        t = np.arange(1, n + 1)[:, None, None] / n
        frames.append(prev[None] + t * (cur - prev)[None])
    return np.concatenate(frames, axis=0)


def synth_generate(spec: SynthSpec) -> tuple[DatasetManifest, list[SequenceRecord]]:
    """Generate a dataset; identical specs give identical output."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    cat_index = {c.name: i for i, c in enumerate(spec.categories)}
    dim = spec.descriptor_dim

    views = {}
    for c in spec.categories:
        modes = np.asarray(c.modes, dtype=np.float64)
        views[c.name] = [
            modes[rng.integers(modes.shape[0], size=spec.descriptors_per_image)]
            + rng.normal(0.0, c.sigma, size=(spec.descriptors_per_image, dim))
            for _ in range(spec.views_per_instance)
        ]
    traj_names = sorted(spec.trajectories)

    records = []
    for s in range(spec.subjects):
        subject = f"s{s + 1}"
        scale = rng.uniform(*spec.scale_range)
        rot = _yaw(rng.uniform(-spec.yaw_range_deg, spec.yaw_range_deg))
        offset = rng.uniform(-spec.offset_range, spec.offset_range, size=3) + np.array([0.0, 0.0, spec.distance])
        tempo = rng.uniform(*spec.tempo_range)
        style = {t: rng.normal(0.0, spec.style_sigma, size=(len(JOINTS), 3)) for t in traj_names}
        for a_idx, act in enumerate(spec.activities):
            clean = _trajectory(spec, act.trajectory, tempo, style[act.trajectory])
            for rep in range(spec.repetitions):
                body = clean + rng.normal(0.0, spec.pose_noise, size=clean.shape)
                world = scale * body @ rot.T + offset
                valid = np.ones(world.shape[:2], dtype=bool)
                if spec.joint_dropout > 0:
                    limbs = [JOINT_INDEX[j] for j in JOINTS if j.endswith(("hand", "elbow"))]
                    drop = rng.random((world.shape[0], len(limbs))) < spec.joint_dropout
                    valid[:, limbs] = ~drop
                world[~valid] = np.nan
                objects = []
                for cname in act.categories:
                    # Several images of the same object, each one descriptor set.
                    for _ in range(spec.images_per_object):
                        template = views[cname][rng.integers(spec.views_per_instance)]
                        noise = rng.normal(0.0, spec.image_noise, size=template.shape)
                        objects.append(ObjectInstance(cat_index[cname], template + noise))
                records.append(
                    SequenceRecord(
                        sequence_id=f"{subject}_{act.name}_r{rep}",
                        subject=subject,
                        activity=a_idx,
                        positions=world,
                        valid=valid,
                        timestamps=np.arange(world.shape[0], dtype=np.float64),
                        objects=objects,
                    )
                )
    manifest = DatasetManifest(
        categories=spec.category_names,
        activities=[a.name for a in spec.activities],
        descriptor_dim=dim,
        sequences=[f"sequences/{r.sequence_id}.json" for r in records],
    )
    for r in records:
        validate_record(r, manifest)
    return manifest, records


def default_spec(seed: int = 0, **overrides) -> SynthSpec:
    """Four activities in two pose-identical pairs, four object categories.

    ``drinking``/``eating`` share a hand-to-mouth motion and
    ``talking_on_phone``/``picking_up`` share a raise-and-hold motion; only
    the object tells each pair apart.
    """
    reach = {"right_hand": [0.3, -0.05, -0.4], "right_elbow": [0.3, 0.1, -0.15]}
    to_mouth = {
        "mouth": [
            {"pose": {}, "frames": 0},
            {"pose": reach, "frames": 12},
            {"pose": {"right_hand": [0.05, 0.52, -0.12], "right_elbow": [0.22, 0.22, -0.2]}, "frames": 12},
            {"pose": {"right_hand": [0.04, 0.53, -0.11], "right_elbow": [0.21, 0.23, -0.2]}, "frames": 12},
            {"pose": reach, "frames": 12},
            {"pose": {}, "frames": 12},
        ],
        "raise": [
            {"pose": {}, "frames": 0},
            {"pose": reach, "frames": 12},
            {"pose": {"right_hand": [0.35, 0.4, -0.3], "right_elbow": [0.38, 0.2, -0.1]}, "frames": 12},
            {"pose": {"right_hand": [0.36, 0.42, -0.32], "right_elbow": [0.38, 0.21, -0.1]}, "frames": 12},
            {"pose": reach, "frames": 12},
            {"pose": {}, "frames": 12},
        ],
    }
    mode_rng = np.random.default_rng(1234)
    names = ["can", "mug", "biscuit_box", "phone"]
    categories = [
        {"name": n, "modes": np.round(mode_rng.uniform(0.0, 1.0, size=(3, 8)), 3).tolist(), "sigma": 0.05}
        for n in names
    ]
    activities = [
        {"name": "drinking", "trajectory": "mouth", "categories": ["mug"]},
        {"name": "eating", "trajectory": "mouth", "categories": ["biscuit_box"]},
        {"name": "talking_on_phone", "trajectory": "raise", "categories": ["phone"]},
        {"name": "picking_up", "trajectory": "raise", "categories": ["can"]},
    ]
    kwargs = dict(trajectories=to_mouth, activities=activities, categories=categories, seed=seed)
    kwargs.update(overrides)
    return SynthSpec(**kwargs)
