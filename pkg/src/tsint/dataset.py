"""Synthetic class-clustered data, uniform label noise, batch sampling and I/O.

Binary layout (little-endian)::

    magic   b"NMLD"     4 bytes
    version u32         (= 1)
    n       u32
    d_in    u32
    C       u32
    split   u8          0 = train, 1 = test
    features            n * d_in float32, row-major
    clean labels        n uint32
    observed labels     n uint32
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

MAGIC = b"NMLD"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIB")
SPLITS = ("train", "test")


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    clean_labels: np.ndarray
    observed_labels: np.ndarray
    n_classes: int
    split: str = "train"

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float32)
        clean = np.asarray(self.clean_labels, dtype=np.int64)
        observed = np.asarray(self.observed_labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ConfigError(f"features must be 2-D, got shape {feats.shape}")
        n = feats.shape[0]
        if clean.shape != (n,) or observed.shape != (n,):
            raise ConfigError("label arrays must have one entry per feature row")
        if self.n_classes < 1:
            raise ConfigError("n_classes must be positive")
        for name, labels in (("clean", clean), ("observed", observed)):
            if n and (labels.min() < 0 or labels.max() >= self.n_classes):
                raise ConfigError(f"{name} labels outside [0, {self.n_classes})")
        if not np.all(np.isfinite(feats)):
            raise ConfigError("features contain non-finite values")
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")
        for arr in (feats, clean, observed):
            arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "clean_labels", clean)
        object.__setattr__(self, "observed_labels", observed)

    def __len__(self):
        return self.features.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.n_classes == other.n_classes
            and self.split == other.split
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.clean_labels, other.clean_labels)
            and np.array_equal(self.observed_labels, other.observed_labels)
        )

    @property
    def d_in(self):
        return self.features.shape[1]

    @property
    def corrupted(self):
        """Boolean flag per sample: observed label differs from the clean one."""
        return self.observed_labels != self.clean_labels

    @property
    def corrupted_fraction(self):
        return float(self.corrupted.mean()) if len(self) else 0.0


@dataclass(frozen=True)
class SyntheticSpec:
    n_classes: int = 50
    per_class: int = 20
    d_in: int = 64
    separation: float = 5.0
    within_std: float = 1.0
    seed: int = 0

    def validate(self):
        if self.n_classes < 2:
            raise ConfigError("synthetic data needs at least 2 classes")
        if self.per_class < 1:
            raise ConfigError("per_class must be >= 1")
        if self.d_in < 1:
            raise ConfigError("d_in must be >= 1")
        if not self.separation > 0:
            raise ConfigError("separation must be > 0")
        if not self.within_std > 0:
            raise ConfigError("within_std must be > 0")


@dataclass(frozen=True)
class Batch:
    indices: np.ndarray
    labels: np.ndarray
    k: int

    @property
    def size(self):
        return len(self.indices)


def gen_synthetic(spec: SyntheticSpec, split: str = "train") -> Dataset:
    """Isotropic Gaussian clusters: centers ~ N(0, s^2 I), samples ~ N(center, sigma_c^2 I).

    Samples are grouped by class in ascending class order.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    centers = rng.standard_normal((spec.n_classes, spec.d_in)) * spec.separation
    labels = np.repeat(np.arange(spec.n_classes), spec.per_class)
    noise = rng.standard_normal((labels.size, spec.d_in)) * spec.within_std
    features = centers[labels] + noise
    return Dataset(features, labels, labels.copy(), spec.n_classes, split)


def inject_uniform_noise(d: Dataset, rate: float, seed: int) -> Dataset:
    """Flip each label with probability ``rate`` to a uniformly drawn different class."""
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"noise rate must be in [0, 1], got {rate}")
    if np.any(d.corrupted):
        raise ConfigError("dataset is already corrupted; inject noise into clean data only")
    if rate > 0 and d.n_classes < 2:
        raise ConfigError("label noise needs at least 2 classes")
    if rate == 0:
        return d
    rng = np.random.default_rng(seed)
    n = len(d)
    flip = rng.random(n) < rate
    # offset in [1, C-1] never maps a label onto itself
    offset = rng.integers(1, d.n_classes, size=n)
    observed = np.where(flip, (d.clean_labels + offset) % d.n_classes, d.clean_labels)
    return Dataset(d.features, d.clean_labels, observed, d.n_classes, d.split)


def split_per_class(d: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified holdout: each clean class contributes ``round(f * size)`` samples to train.

    Every class keeps at least one sample on each side when it has two or more.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(d.n_classes):
        members = np.flatnonzero(d.clean_labels == c)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        n_train = int(round(train_fraction * members.size))
        if members.size >= 2:
            n_train = min(max(n_train, 1), members.size - 1)
        train_idx.append(members[:n_train])
        test_idx.append(members[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return subset(d, train_idx, "train"), subset(d, test_idx, "test")


def subset(d: Dataset, indices, split: str | None = None) -> Dataset:
    indices = np.asarray(indices, dtype=np.int64)
    return Dataset(
        d.features[indices],
        d.clean_labels[indices],
        d.observed_labels[indices],
        d.n_classes,
        split or d.split,
    )


def restrict_classes(d: Dataset, n_keep: int) -> Dataset:
    """Keep samples whose clean class is one of the first ``n_keep`` classes; C becomes n_keep."""
    if not 2 <= n_keep <= d.n_classes:
        raise ConfigError(f"class subset size must be in [2, {d.n_classes}], got {n_keep}")
    if np.any(d.corrupted):
        raise ConfigError("restrict classes before injecting noise")
    idx = np.flatnonzero(d.clean_labels < n_keep)
    return Dataset(
        d.features[idx], d.clean_labels[idx], d.observed_labels[idx], n_keep, d.split
    )


@dataclass
class BatchSampler:
    """Class-balanced sampler over observed labels with its own seeded generator."""

    dataset: Dataset
    batch_size: int
    k: int
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)
    _classes: np.ndarray = field(init=False, repr=False)
    _members: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.k < 1 or self.batch_size < 1:
            raise ConfigError("batch size and k must be positive")
        if self.batch_size % self.k:
            raise ConfigError(f"batch size {self.batch_size} is not divisible by k={self.k}")
        self._classes = np.unique(self.dataset.observed_labels)
        n_cls = self.batch_size // self.k
        if self._classes.size < n_cls:
            raise ConfigError(
                f"batch needs {n_cls} classes but only {self._classes.size} are present"
            )
        self._members = {
            int(c): np.flatnonzero(self.dataset.observed_labels == c) for c in self._classes
        }
        self._rng = np.random.default_rng(self.seed)

    def sample(self) -> Batch:
        n_cls = self.batch_size // self.k
        chosen = self._rng.choice(self._classes, size=n_cls, replace=False)
        parts = []
        for c in chosen:
            members = self._members[int(c)]
            replace = members.size < self.k
            parts.append(self._rng.choice(members, size=self.k, replace=replace))
        indices = np.concatenate(parts)
        return Batch(indices, self.dataset.observed_labels[indices], self.k)


def sample_batch(d: Dataset, k: int, batch_size: int, seed: int) -> Batch:
    """One-shot convenience wrapper around ``BatchSampler``."""
    return BatchSampler(d, batch_size, k, seed).sample()


def save_dataset(d: Dataset, path) -> None:
    n, d_in = d.features.shape
    header = _HEADER.pack(MAGIC, VERSION, n, d_in, d.n_classes, SPLITS.index(d.split))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(d.features.astype("<f4").tobytes())
        fh.write(d.clean_labels.astype("<u4").tobytes())
        fh.write(d.observed_labels.astype("<u4").tobytes())


def load_dataset(path) -> Dataset:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(
            f"{path}: header needs {_HEADER.size} bytes, file has {len(data)}", len(data)
        )
    magic, version, n, d_in, n_classes, split = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}", 4)
    if split >= len(SPLITS):
        raise FormatError(f"{path}: unknown split tag {split}", _HEADER.size - 1)

    offset = _HEADER.size
    blocks = []
    for name, dtype, count in (("features", "<f4", n * d_in), ("clean labels", "<u4", n),
                               ("observed labels", "<u4", n)):
        need = count * 4
        have = len(data) - offset
        if have < need:
            raise FormatError(
                f"{path}: truncated {name} block, missing {need - have} bytes", offset + have
            )
        blocks.append(np.frombuffer(data, dtype=dtype, count=count, offset=offset))
        offset += need
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes", offset)

    features = blocks[0].reshape(n, d_in).astype(np.float32)
    try:
        return Dataset(features, blocks[1].astype(np.int64), blocks[2].astype(np.int64),
                       n_classes, SPLITS[split])
    except ConfigError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def export_csv(d: Dataset, path) -> None:
    """Debug export: id, clean_label, observed_label, features..."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "clean_label", "observed_label"]
                        + [f"f{j}" for j in range(d.d_in)])
        for i in range(len(d)):
            writer.writerow([i, int(d.clean_labels[i]), int(d.observed_labels[i])]
                            + [repr(float(v)) for v in d.features[i]])
