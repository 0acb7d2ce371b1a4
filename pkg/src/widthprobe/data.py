"""Dataset ingestion, preprocessing, and cross-validation folds.

Two on-disk formats are supported: the big-endian IDX image/label pair
used by the classic digit benchmarks, and numeric CSV with a header
row.  Fold plans are value objects that can round-trip through JSON so
a run's exact splits can be archived next to its report.
"""

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, FormatError, ShapeError

CLASSIFICATION = "classification"
REGRESSION = "regression"

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


@dataclass
class Dataset:
    """Feature matrix ``x`` and target matrix ``t``, one row per sample.

    Targets are one-hot rows for classification and raw columns for
    regression.
    """

    x: np.ndarray
    t: np.ndarray
    task: str
    feature_names: list = None

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.t = np.ascontiguousarray(self.t, dtype=np.float64)
        if self.x.ndim != 2 or self.t.ndim != 2:
            raise DataError(
                f"x and t must be 2-D, got shapes {self.x.shape} and {self.t.shape}"
            )
        if self.x.shape[0] != self.t.shape[0]:
            raise DataError(
                f"{self.x.shape[0]} samples in x but {self.t.shape[0]} in t"
            )
        if self.x.shape[0] == 0:
            raise DataError("dataset has no samples")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.t))):
            raise DataError("dataset contains non-finite values")
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise DataError(f"unknown task {self.task!r}")
        if self.task == CLASSIFICATION:
            if not np.all(np.isin(self.t, (0.0, 1.0))):
                raise DataError("classification targets must be one-hot")
            if not np.all(np.sum(self.t, axis=1) == 1.0):
                raise DataError("each one-hot target row must sum to exactly 1")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def n_features(self):
        return self.x.shape[1]

    @property
    def n_targets(self):
        return self.t.shape[1]

    def subset(self, indices):
        return Dataset(
            self.x[indices], self.t[indices], self.task, self.feature_names
        )


def one_hot(labels, n_classes):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(
            f"labels outside [0, {n_classes}): min {labels.min()}, max {labels.max()}"
        )
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels.astype(np.int64)] = 1.0
    return out


# -- IDX ---------------------------------------------------------------


def _read_idx_array(path, expected_magic, expected_ndim):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise FormatError(f"{path}: truncated before magic number (offset 0)")
    magic = struct.unpack(">I", blob[:4])[0]
    if magic != expected_magic:
        raise FormatError(
            f"{path}: bad magic 0x{magic:08X} at offset 0, "
            f"expected 0x{expected_magic:08X}"
        )
    header_end = 4 + 4 * expected_ndim
    if len(blob) < header_end:
        raise FormatError(
            f"{path}: truncated dimension header (offset {len(blob)}, "
            f"need {header_end} bytes)"
        )
    dims = struct.unpack(f">{expected_ndim}I", blob[4:header_end])
    count = int(np.prod(dims, dtype=np.int64))
    if len(blob) != header_end + count:
        raise FormatError(
            f"{path}: payload has {len(blob) - header_end} bytes at offset "
            f"{header_end}, dimensions {dims} require {count}"
        )
    data = np.frombuffer(blob, dtype=np.uint8, offset=header_end)
    return data.reshape(dims)


def load_idx(images_path, labels_path):
    """Load an IDX image/label file pair as a classification dataset.

    Pixels are scaled to [0, 1]; labels become one-hot rows over the 10
    digit classes.  Images are flattened row-major.
    """
    images = _read_idx_array(images_path, IDX_MAGIC_IMAGES, 3)
    labels = _read_idx_array(labels_path, IDX_MAGIC_LABELS, 1)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images.shape[0]} images in {images_path} but "
            f"{labels.shape[0]} labels in {labels_path}"
        )
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    try:
        t = one_hot(labels, 10)
    except DataError as exc:
        raise FormatError(f"{labels_path}: {exc}") from exc
    return Dataset(x, t, CLASSIFICATION)


def downscale_8x8(dataset):
    """Shrink 28x28 image rows to 8x8: zero-pad to 32x32, then 4x4 max-pool.

    28 is not divisible by 4, so two zero pixels are added on every
    side first; zeros can never beat real content in a max.
    """
    if dataset.x.shape[1] != 784:
        raise ShapeError(
            f"expected 784 features (28x28 images), got {dataset.x.shape[1]}"
        )
    n = dataset.n
    images = dataset.x.reshape(n, 28, 28)
    padded = np.zeros((n, 32, 32))
    padded[:, 2:30, 2:30] = images
    pooled = padded.reshape(n, 8, 4, 8, 4).max(axis=(2, 4))
    return Dataset(pooled.reshape(n, 64), dataset.t, dataset.task)


# -- CSV ---------------------------------------------------------------


def _sniff_delimiter(sample):
    try:
        return csv.Sniffer().sniff(sample, delimiters=",;\t").delimiter
    except csv.Error:
        return ","


def load_csv(path, target_columns, standardize=False, delimiter=None):
    """Load a numeric CSV with a header row as a regression dataset.

    ``target_columns`` names the header columns that become targets;
    everything else is a feature.  With ``standardize`` on, features
    are shifted and scaled to mean 0 / variance 1 using this file's own
    rows, so pass it only when the file is the training split.  Targets
    are never rescaled.
    """
    if isinstance(target_columns, str):
        target_columns = [target_columns]
    if not target_columns:
        raise ConfigError("at least one target column is required")
    with open(path, "r", newline="") as fh:
        text = fh.read()
    if delimiter is None:
        delimiter = _sniff_delimiter(text[:4096])
    rows = list(csv.reader(text.splitlines(), delimiter=delimiter))
    rows = [r for r in rows if r]
    if not rows:
        raise FormatError(f"{path}: file is empty")
    header = [name.strip().strip('"') for name in rows[0]]
    missing = [c for c in target_columns if c not in header]
    if missing:
        raise ConfigError(
            f"{path}: target columns {missing} not in header {header}"
        )
    target_idx = [header.index(c) for c in target_columns]
    feature_idx = [i for i in range(len(header)) if i not in target_idx]
    if not feature_idx:
        raise ConfigError(f"{path}: no feature columns remain")

    values = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FormatError(
                f"{path}: row {r} has {len(row)} cells, header has {len(header)}"
            )
        for c, cell in enumerate(row):
            try:
                values[r - 2, c] = float(cell)
            except ValueError:
                raise FormatError(
                    f"{path}: row {r}, column {header[c]!r}: "
                    f"not a number: {cell!r}"
                ) from None

    x = values[:, feature_idx]
    t = values[:, target_idx]
    names = [header[i] for i in feature_idx]
    if standardize:
        mean, std = feature_stats(x, names)
        x = apply_standardize(x, mean, std)
    return Dataset(x, t, REGRESSION, feature_names=names)


def feature_stats(x, names=None):
    """Per-column mean and standard deviation; rejects constant columns."""
    mean = np.mean(x, axis=0)
    std = np.std(x, axis=0)
    dead = np.flatnonzero(std == 0.0)
    if dead.size:
        labels = [names[i] if names else str(i) for i in dead]
        raise DataError(f"constant feature columns cannot be standardized: {labels}")
    return mean, std


def apply_standardize(x, mean, std):
    return (x - mean) / std


def split_dataset(dataset, test_fraction, seed):
    """Seeded shuffle split into (train, test) datasets."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = int(round(dataset.n * test_fraction))
    if n_test < 1 or n_test >= dataset.n:
        raise ConfigError(
            f"test_fraction {test_fraction} leaves an empty split for n={dataset.n}"
        )
    perm = np.random.default_rng(seed).permutation(dataset.n)
    return dataset.subset(np.sort(perm[n_test:])), dataset.subset(
        np.sort(perm[:n_test])
    )


# -- folds -------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    """Disjoint assignment of ``n`` samples to ``c`` folds."""

    c: int
    seed: int
    assignments: np.ndarray = field(compare=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.assignments, dtype=np.int64)
        object.__setattr__(self, "assignments", arr)
        if arr.ndim != 1 or arr.size == 0:
            raise DataError("assignments must be a non-empty 1-D array")
        sizes = np.bincount(arr, minlength=self.c)
        if arr.min() < 0 or arr.max() >= self.c:
            raise DataError(f"fold ids must lie in [0, {self.c})")
        if sizes.max() - sizes.min() > 1:
            raise DataError(f"fold sizes {sizes.tolist()} differ by more than 1")
        if sizes.min() == 0:
            raise DataError("every fold must be non-empty")

    @property
    def n(self):
        return self.assignments.shape[0]

    def fold_sizes(self):
        return np.bincount(self.assignments, minlength=self.c).tolist()

    def _check_fold(self, i):
        if not 0 <= i < self.c:
            raise ConfigError(f"fold index {i} out of range [0, {self.c})")

    def val_indices(self, i):
        """Samples held out from fold i's training run."""
        self._check_fold(i)
        return np.flatnonzero(self.assignments == i)

    def train_indices(self, i):
        self._check_fold(i)
        return np.flatnonzero(self.assignments != i)

    def pair_indices(self, i, j):
        """Union of the two validation folds: the rows neither training
        run i nor training run j saw in common."""
        self._check_fold(i)
        self._check_fold(j)
        if i == j:
            raise ConfigError("pair evaluation needs two distinct folds")
        return np.flatnonzero((self.assignments == i) | (self.assignments == j))

    def to_json(self):
        return json.dumps(
            {
                "schema": "widthprobe-foldplan/1",
                "n": self.n,
                "c": self.c,
                "seed": self.seed,
                "assignments": self.assignments.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"fold plan is not valid JSON: {exc}") from exc
        if data.get("schema") != "widthprobe-foldplan/1":
            raise FormatError(f"unrecognized fold plan schema {data.get('schema')!r}")
        plan = cls(
            c=int(data["c"]),
            seed=int(data["seed"]),
            assignments=np.asarray(data["assignments"], dtype=np.int64),
        )
        if plan.n != int(data["n"]):
            raise FormatError(
                f"fold plan claims n={data['n']} but lists {plan.n} assignments"
            )
        return plan

    def checksum(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def make_folds(n_samples, c, seed):
    """Seeded shuffle followed by round-robin fold assignment.

    At least two folds are required: each fold's network must be judged
    on data it never trained on, using a partner trained without that
    data, and with a single fold no such partner exists.
    """
    if c < 2:
        raise ConfigError(
            f"need at least 2 folds (got {c}): width estimates compare each "
            "trained network against a partner trained on different rows"
        )
    if n_samples < c:
        raise ConfigError(f"cannot split {n_samples} samples into {c} folds")
    perm = np.random.default_rng(seed).permutation(n_samples)
    assignments = np.empty(n_samples, dtype=np.int64)
    assignments[perm] = np.arange(n_samples) % c
    return FoldPlan(c=c, seed=int(seed), assignments=assignments)
