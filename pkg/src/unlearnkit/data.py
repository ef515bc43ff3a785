"""Synthetic classification datasets and the standardized deletion protocol.

Every generator is a pure function of its spec (seed included): calling it
twice gives byte-identical arrays. Deletion sets are prefixes of one
seed-determined permutation, so the set for ratio r is always contained in
the set for ratio r+1 and capacity curves stay comparable across ratios.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError

GENERATORS = ("gaussian_blobs", "spiral", "ring")

DEL_RATIO_RANGE = range(1, 11)  # percent of the training set, 1..10

# Class centroids sit on a circle of this radius (first two coordinates).
# With the default noise of 0.1 this keeps classes cleanly separable while
# leaving individual points isolated enough to memorize in higher dimensions.
_BLOB_RADIUS = 0.45


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic dataset."""

    generator: str = "gaussian_blobs"
    num_classes: int = 3
    samples_per_class: int = 100
    noise: float = 0.1
    dim: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}; "
                              f"choose from {GENERATORS}")
        if self.num_classes < 2:
            raise ConfigError(f"need >= 2 classes, got {self.num_classes}")
        if self.samples_per_class < 10:
            raise ConfigError(f"need >= 10 samples per class, got {self.samples_per_class}")
        if self.dim < 2:
            raise ConfigError(f"need dim >= 2, got {self.dim}")
        if self.generator in ("spiral", "ring") and self.dim != 2:
            raise ConfigError(f"{self.generator} only supports dim=2")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")

    def to_dict(self) -> dict:
        return {"generator": self.generator, "num_classes": self.num_classes,
                "samples_per_class": self.samples_per_class, "noise": self.noise,
                "dim": self.dim, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)


def parse_data_name(name: str) -> SynthSpec:
    """Parse a compact dataset string such as ``gaussian_blobs:c3:s100:d2:noise0.1:seed0``.

    The generator name alone selects the defaults.
    """
    parts = name.split(":")
    kwargs: dict = {"generator": parts[0]}
    for part in parts[1:]:
        if part.startswith("noise"):
            kwargs["noise"] = float(part[5:])
        elif part.startswith("seed"):
            kwargs["seed"] = int(part[4:])
        elif part.startswith("c"):
            kwargs["num_classes"] = int(part[1:])
        elif part.startswith("s"):
            kwargs["samples_per_class"] = int(part[1:])
        elif part.startswith("d"):
            kwargs["dim"] = int(part[1:])
        else:
            raise ConfigError(f"unrecognized field {part!r} in data name {name!r}")
    return SynthSpec(**kwargs)


def format_data_name(spec: SynthSpec) -> str:
    return (f"{spec.generator}:c{spec.num_classes}:s{spec.samples_per_class}"
            f":d{spec.dim}:noise{spec.noise:g}:seed{spec.seed}")


@dataclass
class DatasetSplit:
    """Train/test tensors plus the deletion index set over the training rows."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    seed: int
    spec: SynthSpec | None = None
    del_ratio: int | None = None
    del_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        self.del_indices = np.asarray(self.del_indices, dtype=np.int64)
        n = len(self.train_y)
        if self.del_indices.size:
            if self.del_indices.min() < 0 or self.del_indices.max() >= n:
                raise ConfigError("deletion indices out of range")
            if np.unique(self.del_indices).size != self.del_indices.size:
                raise ConfigError("deletion indices contain duplicates")

    @property
    def num_classes(self) -> int:
        return int(self.train_y.max()) + 1

    @property
    def num_train(self) -> int:
        return len(self.train_y)

    @property
    def retain_indices(self) -> np.ndarray:
        keep = np.ones(self.num_train, dtype=bool)
        keep[self.del_indices] = False
        return np.nonzero(keep)[0].astype(np.int64)

    @property
    def forget_x(self) -> np.ndarray:
        return self.train_x[self.del_indices]

    @property
    def forget_y(self) -> np.ndarray:
        return self.train_y[self.del_indices]

    @property
    def retain_x(self) -> np.ndarray:
        return self.train_x[self.retain_indices]

    @property
    def retain_y(self) -> np.ndarray:
        return self.train_y[self.retain_indices]

    def with_deletion(self, del_ratio: int, seed: int | None = None) -> "DatasetSplit":
        indices = sample_deletion_set(self, del_ratio, seed)
        return replace(self, del_ratio=int(del_ratio), del_indices=indices)


# ----------------------------------------------------------------- generators

def _blob_centroids(num_classes: int, dim: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers = np.zeros((num_classes, dim))
    centers[:, 0] = _BLOB_RADIUS * np.cos(angles)
    centers[:, 1] = _BLOB_RADIUS * np.sin(angles)
    return centers

def _gen_gaussian_blobs(spec: SynthSpec, rng: np.random.Generator):
    centers = _blob_centroids(spec.num_classes, spec.dim)
    xs, ys = [], []
    for cls in range(spec.num_classes):
        pts = centers[cls] + spec.noise * rng.standard_normal((spec.samples_per_class, spec.dim))
        xs.append(pts)
        ys.append(np.full(spec.samples_per_class, cls, dtype=np.int64))
    return np.vstack(xs), np.concatenate(ys)


def _gen_spiral(spec: SynthSpec, rng: np.random.Generator):
    xs, ys = [], []
    for cls in range(spec.num_classes):
        t = np.linspace(0.25, 1.0, spec.samples_per_class)
        theta = 3.0 * np.pi * t + 2.0 * np.pi * cls / spec.num_classes
        radius = t
        pts = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
        pts += spec.noise * rng.standard_normal(pts.shape)
        xs.append(pts)
        ys.append(np.full(spec.samples_per_class, cls, dtype=np.int64))
    return np.vstack(xs), np.concatenate(ys)


def _gen_ring(spec: SynthSpec, rng: np.random.Generator):
    xs, ys = [], []
    for cls in range(spec.num_classes):
        radius = (cls + 1.0) / spec.num_classes
        theta = rng.uniform(0.0, 2.0 * np.pi, spec.samples_per_class)
        pts = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
        pts += spec.noise * rng.standard_normal(pts.shape)
        xs.append(pts)
        ys.append(np.full(spec.samples_per_class, cls, dtype=np.int64))
    return np.vstack(xs), np.concatenate(ys)


_GEN_FNS = {"gaussian_blobs": _gen_gaussian_blobs, "spiral": _gen_spiral,
            "ring": _gen_ring}


def generate(spec: SynthSpec) -> DatasetSplit:
    """Build a dataset and its stratified 80/20 train/test split (no deletion set)."""
    rng = np.random.default_rng(spec.seed)
    x, y = _GEN_FNS[spec.generator](spec, rng)
    train_idx, test_idx = [], []
    n_test = max(1, round(0.2 * spec.samples_per_class))
    for cls in range(spec.num_classes):
        rows = np.nonzero(y == cls)[0]
        rows = rng.permutation(rows)
        test_idx.append(rows[:n_test])
        train_idx.append(rows[n_test:])
    train_idx = rng.permutation(np.concatenate(train_idx))
    test_idx = rng.permutation(np.concatenate(test_idx))
    return DatasetSplit(train_x=x[train_idx], train_y=y[train_idx],
                        test_x=x[test_idx], test_y=y[test_idx],
                        seed=spec.seed, spec=spec)


def blob_centroids(spec: SynthSpec) -> np.ndarray:
    """Class centroids used by the blob generator (handy as a test oracle)."""
    if spec.generator != "gaussian_blobs":
        raise ConfigError("centroids are only defined for gaussian_blobs")
    return _blob_centroids(spec.num_classes, spec.dim)


# ----------------------------------------------------------- deletion protocol

def sample_deletion_set(split: DatasetSplit, del_ratio: int,
                        seed: int | None = None) -> np.ndarray:
    """Pick the deletion set: a prefix of one seeded permutation of train rows.

    ``del_ratio`` is a percentage in 1..10; the set size is
    ``round(ratio% * |train|)``. Prefix construction makes sets nest across
    ratios under a fixed seed.
    """
    if int(del_ratio) != del_ratio or int(del_ratio) not in DEL_RATIO_RANGE:
        raise ConfigError(f"del_ratio must be an integer in 1..10, got {del_ratio}")
    if seed is None:
        seed = split.seed
    n = split.num_train
    k = round(n * int(del_ratio) / 100.0)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:k]).astype(np.int64)


def corrupt_labels(split: DatasetSplit, del_indices: np.ndarray, seed: int) -> np.ndarray:
    """Draw a wrong label uniformly from the other classes for each deletion row."""
    c = split.num_classes
    if c < 2:
        raise ConfigError("label corruption needs at least 2 classes")
    del_indices = np.asarray(del_indices, dtype=np.int64)
    rng = np.random.default_rng(seed)
    originals = split.train_y[del_indices]
    draws = rng.integers(0, c - 1, size=del_indices.size)
    return np.where(draws >= originals, draws + 1, draws).astype(np.int64)


# ------------------------------------------------------------------ test shift

def shift_testset(split: DatasetSplit, kind: str, magnitude: float,
                  seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Perturb test inputs (labels untouched). Magnitude 0 returns exact copies."""
    if magnitude < 0:
        raise ConfigError(f"shift magnitude must be >= 0, got {magnitude}")
    x = split.test_x.copy()
    y = split.test_y.copy()
    if kind not in ("noise", "rotate", "scale"):
        raise ConfigError(f"unknown shift kind {kind!r} (noise, rotate, scale)")
    if magnitude == 0:
        return x, y
    if kind == "noise":
        rng = np.random.default_rng(split.seed + 7919 if seed is None else seed)
        x = x + magnitude * rng.standard_normal(x.shape)
    elif kind == "rotate":
        cos, sin = np.cos(magnitude), np.sin(magnitude)
        rot = np.array([[cos, -sin], [sin, cos]])
        x[:, :2] = x[:, :2] @ rot.T
    else:
        x = x * (1.0 + magnitude)
    return x, y


# ------------------------------------------------------------------- export/io

def export_split(split: DatasetSplit, csv_path, sidecar_path) -> None:
    """Write features/label/is_deleted rows plus a JSON sidecar for reproduction."""
    dim = split.train_x.shape[1]
    deleted = np.zeros(split.num_train, dtype=int)
    deleted[split.del_indices] = 1
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["set"] + [f"feat_{i}" for i in range(dim)] + ["label", "is_deleted"])
        for i in range(split.num_train):
            writer.writerow(["train"] + [repr(float(v)) for v in split.train_x[i]]
                            + [int(split.train_y[i]), int(deleted[i])])
        for i in range(len(split.test_y)):
            writer.writerow(["test"] + [repr(float(v)) for v in split.test_x[i]]
                            + [int(split.test_y[i]), 0])
    sidecar = {"seed": split.seed, "del_ratio": split.del_ratio,
               "spec": split.spec.to_dict() if split.spec else None}
    Path(sidecar_path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def import_split(csv_path, sidecar_path) -> DatasetSplit:
    sidecar = json.loads(Path(sidecar_path).read_text())
    train_x, train_y, test_x, test_y, del_rows = [], [], [], [], []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 3
        for row in reader:
            feats = [float(v) for v in row[1:1 + dim]]
            label = int(row[1 + dim])
            if row[0] == "train":
                if int(row[2 + dim]):
                    del_rows.append(len(train_y))
                train_x.append(feats)
                train_y.append(label)
            else:
                test_x.append(feats)
                test_y.append(label)
    spec = SynthSpec.from_dict(sidecar["spec"]) if sidecar.get("spec") else None
    return DatasetSplit(
        train_x=np.array(train_x), train_y=np.array(train_y, dtype=np.int64),
        test_x=np.array(test_x), test_y=np.array(test_y, dtype=np.int64),
        seed=sidecar["seed"], spec=spec, del_ratio=sidecar.get("del_ratio"),
        del_indices=np.array(del_rows, dtype=np.int64))
