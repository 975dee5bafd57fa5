"""Open-pose benchmark construction: seeded uniform SO(3) rotations applied
to a class-labeled tree of geometry files, with a reproducible manifest.

The rotation stream is counter-based (Philox keyed on (seed, index)), so any
single sample can be regenerated without replaying the whole stream.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .core3d import RotationQ, rotate
from .errors import EmptyDataset, Op3DError, UnknownDataset, UnreadableSample
from .io import GEOMETRY_EXTENSIONS, load_geometry, save_geometry

MANIFEST_NAME = "manifest.jsonl"
MANIFEST_VERSION = 1

MODELNET10_CLASSES = (
    "bathtub", "bed", "chair", "desk", "dresser",
    "monitor", "night_stand", "sofa", "table", "toilet",
)

MODELNET40_CLASSES = (
    "airplane", "bathtub", "bed", "bench", "bookshelf", "bottle", "bowl",
    "car", "chair", "cone", "cup", "curtain", "desk", "door", "dresser",
    "flower_pot", "glass_box", "guitar", "keyboard", "lamp", "laptop",
    "mantel", "monitor", "night_stand", "person", "piano", "plant", "radio",
    "range_hood", "sink", "sofa", "stairs", "stool", "table", "tent",
    "toilet", "tv_stand", "vase", "wardrobe", "xbox",
)

MCGILL_UNSEEN_CLASSES = (
    "ant", "bird", "crab", "dinosaur", "dolphin", "fish", "hand",
    "octopus", "plier", "quadruple", "snake", "spectacle", "spider", "teddy",
)

# McGill categories shared with the 30 seen classes above.
MCGILL_SEEN_CLASSES = ("airplane", "chair", "cup", "human", "table")


@dataclass(frozen=True)
class DatasetSplit:
    """Seen/unseen class partition plus train/valid/test sample counts.

    ``total_classes`` can exceed seen + unseen: a benchmark may leave part of
    its catalogue out of the zero-shot protocol (the 10 held-out classes of
    the 40-class set are evaluated as their own dataset).
    """

    name: str
    total_classes: int
    seen_classes: tuple[str, ...]
    unseen_classes: tuple[str, ...]
    train: int
    valid: int
    test: int

    def __post_init__(self):
        overlap = set(self.seen_classes) & set(self.unseen_classes)
        if overlap:
            raise ValueError(f"seen/unseen overlap: {sorted(overlap)}")
        if len(self.seen_classes) + len(self.unseen_classes) > self.total_classes:
            raise ValueError("seen + unseen exceed the class total")


_SPLITS = {
    "modelnet40": DatasetSplit(
        "modelnet40",
        total_classes=40,
        seen_classes=tuple(c for c in MODELNET40_CLASSES if c not in MODELNET10_CLASSES),
        unseen_classes=(),
        train=5852, valid=1560, test=0,
    ),
    "modelnet10": DatasetSplit(
        "modelnet10",
        total_classes=10,
        seen_classes=(),
        unseen_classes=MODELNET10_CLASSES,
        train=0, valid=0, test=908,
    ),
    "mcgill": DatasetSplit(
        "mcgill",
        total_classes=19,
        seen_classes=MCGILL_SEEN_CLASSES,
        unseen_classes=MCGILL_UNSEEN_CLASSES,
        train=0, valid=0, test=115,
    ),
}


def load_split(dataset_name: str) -> DatasetSplit:
    """Return the class partition and sample counts for a known benchmark."""
    try:
        return _SPLITS[dataset_name.lower()]
    except KeyError:
        raise UnknownDataset(
            f"{dataset_name!r}; known: {sorted(_SPLITS)}"
        ) from None


def sample_rotation(seed: int, index: int) -> RotationQ:
    """Deterministic uniform random rotation for stream position ``index``.

    Uses a Philox generator keyed on (seed, index) and the standard mapping
    from three uniforms to a unit quaternion uniform on SO(3).
    """
    if index < 0:
        raise ValueError("index must be >= 0")
    key = np.array([seed, index], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    u1, u2, u3 = gen.random(3)
    a, b = math.sqrt(1.0 - u1), math.sqrt(u1)
    t2, t3 = 2.0 * math.pi * u2, 2.0 * math.pi * u3
    return RotationQ.normalized(
        a * math.sin(t2), a * math.cos(t2), b * math.sin(t3), b * math.cos(t3)
    )


@dataclass(frozen=True)
class PoseManifest:
    """Record of which rotation was applied to each sample of a dataset."""

    dataset_name: str
    seed: int
    entries: tuple  # of (sample_id, class_name, RotationQ)

    def __post_init__(self):
        ids = [e[0] for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate sample_id in manifest")

    def __len__(self) -> int:
        return len(self.entries)

    def class_histogram(self) -> dict[str, int]:
        hist: dict[str, int] = {}
        for _, cls, _ in self.entries:
            hist[cls] = hist.get(cls, 0) + 1
        return hist

    def save(self, path) -> None:
        with open(path, "w") as f:
            header = {
                "format_version": MANIFEST_VERSION,
                "dataset_name": self.dataset_name,
                "seed": self.seed,
            }
            f.write(json.dumps(header, sort_keys=True) + "\n")
            for sample_id, cls, q in self.entries:
                rec = {
                    "sample_id": sample_id,
                    "class_name": cls,
                    "quaternion": list(q.as_tuple()),
                }
                f.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "PoseManifest":
        with open(path, "r") as f:
            header = json.loads(f.readline())
            if header.get("format_version") != MANIFEST_VERSION:
                raise Op3DError(f"unsupported manifest version {header.get('format_version')!r}")
            entries = []
            for line in f:
                rec = json.loads(line)
                q = RotationQ(*rec["quaternion"])
                entries.append((rec["sample_id"], rec["class_name"], q))
        return cls(header["dataset_name"], header["seed"], tuple(entries))


def discover_samples(source_dir) -> list[tuple[str, str, str]]:
    """Find geometry files under ``source_dir``, sorted by sample id.

    Returns (sample_id, class_name, absolute path); the class is the first
    path component below the source root, the sample id the relative path
    without extension.
    """
    source_dir = os.path.abspath(source_dir)
    found = []
    for root, _dirs, files in os.walk(source_dir):
        for name in files:
            if os.path.splitext(name)[1].lower() not in GEOMETRY_EXTENSIONS:
                continue
            path = os.path.join(root, name)
            rel = os.path.relpath(path, source_dir)
            parts = rel.replace(os.sep, "/").split("/")
            if len(parts) < 2:
                continue  # files directly in the root carry no class label
            sample_id = os.path.splitext("/".join(parts))[0]
            found.append((sample_id, parts[0], path))
    found.sort(key=lambda t: t[0])
    return found


def generate_openpose_dataset(source_dir, dataset_name: str, seed: int, out_dir) -> PoseManifest:
    """Rotate every sample in a class-labeled tree and write the result.

    Output mirrors the source tree under ``out_dir`` and includes
    ``manifest.jsonl``. Re-running with the same seed is byte-identical, and
    the manifest alone is enough to regenerate every rotated file.
    """
    samples = discover_samples(source_dir)
    if not samples:
        raise EmptyDataset(f"no geometry files under {source_dir}")

    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for index, (sample_id, cls, path) in enumerate(samples):
        q = sample_rotation(seed, index)
        try:
            geom = load_geometry(path)
        except Op3DError as e:
            raise UnreadableSample(path, str(e)) from e
        rotated = rotate(geom, q)
        rel = os.path.relpath(path, os.path.abspath(source_dir))
        dest = os.path.join(out_dir, rel)
        os.makedirs(os.path.dirname(dest), exist_ok=True)
        save_geometry(rotated, dest)
        entries.append((sample_id, cls, q))

    manifest = PoseManifest(dataset_name, seed, tuple(entries))
    manifest.save(os.path.join(out_dir, MANIFEST_NAME))
    return manifest
