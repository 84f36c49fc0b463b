"""Datasets, file readers/writers and minibatch sampling.

Samples are stored as columns of a ``d x N`` matrix, matching the feature
layout used by the loss and the network.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SPLITS = ("train", "val", "test")


class DataError(ValueError):
    """Base class for dataset ingestion failures."""


class IdxMagicError(DataError):
    pass


class IdxTruncatedError(DataError):
    pass


class IdxCountMismatchError(DataError):
    pass


class CsvParseError(DataError):
    def __init__(self, path, line, msg):
        self.line = line
        super().__init__(f"{path}:{line}: {msg}")


@dataclass(frozen=True)
class Dataset:
    samples: np.ndarray  # d x N
    labels: np.ndarray
    class_count: int
    split: str = "train"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if samples.ndim != 2 or labels.shape != (samples.shape[1],):
            raise DataError(f"samples {samples.shape} and labels {labels.shape} disagree")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise DataError(f"labels must lie in [0, {self.class_count})")
        if self.split not in SPLITS:
            raise DataError(f"unknown split {self.split!r}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.samples.shape[1]

    def subset(self, idx, split: str | None = None) -> "Dataset":
        return replace(self, samples=self.samples[:, idx], labels=self.labels[idx], split=split or self.split)

    def only_classes(self, classes) -> "Dataset":
        """Keep the listed classes, relabelled to 0..k-1 in the given order."""
        classes = list(classes)
        mapping = {c: i for i, c in enumerate(classes)}
        idx = np.flatnonzero(np.isin(self.labels, classes))
        labels = np.array([mapping[int(c)] for c in self.labels[idx]], dtype=np.int64)
        return Dataset(self.samples[:, idx], labels, len(classes), self.split)


def make_gaussian_blobs(d: int, C: int, n_per_class: int, spread: float, seed: int, split: str = "train") -> Dataset:
    """Isotropic Gaussian clusters around random directions of length 5.

    The centers depend only on ``seed``; the noise also depends on ``split``,
    so train/val/test draws from one seed share the same class geometry.
    Samples are grouped by class.
    """
    if d < 2 or C < 2:
        raise ValueError("need d >= 2 and C >= 2")
    directions = np.random.default_rng([seed, 0]).standard_normal((d, C))
    centers = 5.0 * directions / np.linalg.norm(directions, axis=0)
    rng = np.random.default_rng([seed, 1 + SPLITS.index(split)])
    labels = np.repeat(np.arange(C), n_per_class)
    samples = centers[:, labels] + spread * rng.standard_normal((d, labels.size))
    return Dataset(samples, labels, C, split)


def train_val_split(ds: Dataset, seed: int, val_fraction: float = 0.1) -> tuple[Dataset, Dataset]:
    """Shuffle with ``seed`` and hold out the last ``val_fraction`` as validation."""
    perm = np.random.default_rng(seed).permutation(len(ds))
    n_val = max(1, int(round(val_fraction * len(ds))))
    return ds.subset(perm[:-n_val], "train"), ds.subset(perm[-n_val:], "val")


# --- IDX ------------------------------------------------------------------


def _read_header(data: bytes, path, count: int) -> tuple[int, ...]:
    if len(data) < 4 * count:
        raise IdxTruncatedError(f"{path}: header truncated")
    return struct.unpack(f">{count}I", data[: 4 * count])


def load_idx(images_path, labels_path, class_count: int | None = None, split: str = "train") -> Dataset:
    """Read an IDX image/label file pair; pixels are scaled to [0, 1]."""
    with open(images_path, "rb") as f:
        img = f.read()
    with open(labels_path, "rb") as f:
        lab = f.read()
    (magic,) = _read_header(img, images_path, 1)
    if magic != IDX_IMAGES_MAGIC:
        raise IdxMagicError(f"{images_path}: magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")
    (magic,) = _read_header(lab, labels_path, 1)
    if magic != IDX_LABELS_MAGIC:
        raise IdxMagicError(f"{labels_path}: magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")
    _, n, rows, cols = _read_header(img, images_path, 4)
    _, n_lab = _read_header(lab, labels_path, 2)
    if n != n_lab:
        raise IdxCountMismatchError(f"{images_path} has {n} images but {labels_path} has {n_lab} labels")
    expected = 16 + n * rows * cols
    if len(img) < expected:
        raise IdxTruncatedError(f"{images_path}: expected {expected} bytes, found {len(img)}")
    if len(lab) < 8 + n:
        raise IdxTruncatedError(f"{labels_path}: expected {8 + n} bytes, found {len(lab)}")
    pixels = np.frombuffer(img, dtype=np.uint8, count=n * rows * cols, offset=16)
    samples = pixels.reshape(n, rows * cols).T / 255.0
    labels = np.frombuffer(lab, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    if class_count is None:
        class_count = int(labels.max()) + 1 if n else 1
    return Dataset(samples, labels, class_count, split)


def save_idx(images: np.ndarray, labels, images_path, labels_path) -> None:
    """Write ``N x rows x cols`` uint8 images and their labels as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.size))
        f.write(labels.tobytes())


# --- labelled-vector text format --------------------------------------------


def load_csv(path, class_count: int | None = None, split: str = "train") -> Dataset:
    """Read ``label,v1,...,vd`` rows. Blank lines are skipped."""
    labels, rows = [], []
    width = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
                if width < 2:
                    raise CsvParseError(path, lineno, "need a label and at least one value")
            elif len(fields) != width:
                raise CsvParseError(path, lineno, f"expected {width} fields, found {len(fields)}")
            try:
                label = int(fields[0])
                values = [float(v) for v in fields[1:]]
            except ValueError as exc:
                raise CsvParseError(path, lineno, str(exc)) from None
            labels.append(label)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no samples")
    labels = np.array(labels, dtype=np.int64)
    if labels.min() < 0:
        raise DataError(f"{path}: negative label")
    if class_count is None:
        class_count = int(labels.max()) + 1
    return Dataset(np.array(rows).T, labels, class_count, split)


def save_csv(ds: Dataset, path) -> None:
    """Write with ``repr`` floats so a reload is bit-identical."""
    with open(path, "w") as f:
        for j in range(len(ds)):
            f.write(",".join([str(int(ds.labels[j]))] + [repr(float(v)) for v in ds.samples[:, j]]))
            f.write("\n")


# --- minibatches ------------------------------------------------------------


@dataclass
class BatchSampler:
    batch_size: int = 64
    seed: int = 0
    epoch: int = 0
    stratified: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def order(self, ds: Dataset, epoch: int | None = None) -> np.ndarray:
        """The sample permutation for ``epoch`` (default: the current one)."""
        epoch = self.epoch if epoch is None else epoch
        rng = np.random.default_rng([self.seed, epoch])
        perm = rng.permutation(len(ds))
        if not self.stratified:
            return perm
        # Round-robin over classes so every batch sees each class when possible.
        by_class = [perm[ds.labels[perm] == c] for c in range(ds.class_count)]
        out = []
        for k in range(max((len(b) for b in by_class), default=0)):
            out.extend(int(b[k]) for b in by_class if k < len(b))
        return np.array(out, dtype=np.int64)

    def epoch_batches(self, ds: Dataset) -> list[tuple[np.ndarray, np.ndarray]]:
        """All ``(inputs, labels)`` batches of the current epoch, then advance the epoch."""
        if len(ds) == 0:
            raise DataError("cannot sample from an empty dataset")
        perm = self.order(ds)
        self.epoch += 1
        return [
            (ds.samples[:, idx], ds.labels[idx])
            for idx in (perm[i : i + self.batch_size] for i in range(0, len(perm), self.batch_size))
        ]


def next_batch(ds: Dataset, sampler: BatchSampler, position: int) -> tuple[np.ndarray, np.ndarray]:
    """Batch number ``position`` of the sampler's current epoch."""
    if len(ds) == 0:
        raise DataError("cannot sample from an empty dataset")
    idx = sampler.order(ds)[position * sampler.batch_size : (position + 1) * sampler.batch_size]
    return ds.samples[:, idx], ds.labels[idx]


# --- numeric tables (experiment artifacts) -----------------------------------

NUMBER_FORMAT = "{:.9g}"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return NUMBER_FORMAT.format(float(v))


def write_table(path, header, rows) -> None:
    """CSV with a header line; floats at 9 significant digits."""
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def read_table(path) -> dict[str, np.ndarray]:
    """Inverse of ``write_table``: column name -> float array."""
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty table")
    header = lines[0].split(",")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != len(header):
            raise CsvParseError(path, lineno, f"expected {len(header)} fields, found {len(fields)}")
        try:
            rows.append([float(v) for v in fields])
        except ValueError as exc:
            raise CsvParseError(path, lineno, str(exc)) from None
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_matrix(path, matrix) -> None:
    """Headerless CSV of a 2-D array, one matrix row per line."""
    with open(path, "w") as f:
        for row in np.atleast_2d(matrix):
            f.write(",".join(NUMBER_FORMAT.format(v) for v in row) + "\n")


def read_matrix(path) -> np.ndarray:
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise CsvParseError(path, lineno, str(exc)) from None
            if len(rows[-1]) != len(rows[0]):
                raise CsvParseError(path, lineno, f"expected {len(rows[0])} fields, found {len(rows[-1])}")
    return np.array(rows, dtype=np.float64)


def write_features(path, features, labels) -> None:
    """Features in the ``label,v1,...,vD`` format readable by ``load_csv``."""
    with open(path, "w") as f:
        for j, label in enumerate(np.asarray(labels)):
            f.write(",".join([str(int(label))] + [NUMBER_FORMAT.format(v) for v in features[:, j]]) + "\n")
