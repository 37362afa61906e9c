"""
Datasets, shift pairs and synthetic shift benchmarks.

A ShiftPair bundles labeled source data with unlabeled target data. The
target labels are kept inside the pair and can only be read through
``hidden_target(purpose)``, which records every access; estimators take
plain source/target datasets and never see the pair itself.

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import csv
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from sklearn.datasets import make_moons

from shiftgauge.constants import DEFAULT_VAL_FRACTION, DomainTag
from shiftgauge.exceptions import FormatError, InvalidInputError
from shiftgauge.rng import RngStreams

logger = logging.getLogger("shiftgauge")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

TOY_JITTER = 0.15
TOY_BAND = (0.8, 1.2)
GAUSS_STD = 0.5
# Centre of the standard two-moons sample; moving it to the origin makes
# the pair point-symmetric, so a 180 degree rotation swaps the classes.
MOONS_CENTER = np.array([0.5, 0.25])


@dataclass
class Dataset:
    """
    A feature matrix with optional class labels.

    Attributes:
        features: n x d float64 matrix
        labels: Optional length-n vector of class indices in [0, num_classes)
        domain_tag: "source" or "target"
        name: Human-readable name used in filenames and logs
        num_classes: Number of classes K
    """

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    domain_tag: DomainTag = DomainTag.SOURCE
    name: str = "dataset"
    num_classes: int = 2

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features.reshape(-1, 1)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise InvalidInputError(
                f"dataset '{self.name}' needs an n x d matrix with n >= 1, "
                f"got shape {list(self.features.shape)}"
            )
        self.domain_tag = DomainTag(self.domain_tag)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (self.features.shape[0],):
                raise InvalidInputError(
                    f"dataset '{self.name}': {labels.shape[0] if labels.ndim else 0} labels "
                    f"for {self.features.shape[0]} points"
                )
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise InvalidInputError(
                    f"dataset '{self.name}': labels must lie in [0, {self.num_classes})"
                )
            self.labels = labels.astype(np.int64)

    def __len__(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    def subset(self, indices: np.ndarray, name: Optional[str] = None) -> "Dataset":
        return Dataset(
            features=self.features[indices],
            labels=None if self.labels is None else self.labels[indices],
            domain_tag=self.domain_tag,
            name=name or self.name,
            num_classes=self.num_classes,
        )

    def without_labels(self) -> "Dataset":
        return Dataset(self.features.copy(), None, self.domain_tag, self.name, self.num_classes)

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise InvalidInputError(f"dataset '{self.name}' has no labels")
        return self.labels

    def to_rows(self, include_labels: bool = True) -> Tuple[List[str], List[list]]:
        """Header and rows for CSV export (features, then the label column)."""
        header = [f"x{j}" for j in range(self.dim)]
        if include_labels and self.labels is not None:
            header.append("label")
            rows = [[*map(float, x), int(y)] for x, y in zip(self.features, self.labels)]
        else:
            rows = [list(map(float, x)) for x in self.features]
        return header, rows


@dataclass
class Standardizer:
    """Per-column standardisation fitted on source features only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "Standardizer":
        std = features.std(axis=0)
        return cls(features.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, dataset: Dataset) -> Dataset:
        return Dataset(
            (dataset.features - self.mean) / self.std,
            dataset.labels,
            dataset.domain_tag,
            dataset.name,
            dataset.num_classes,
        )


@dataclass
class ShiftPair:
    """
    Labeled source data, unlabeled target data and the hidden target labels.

    Build with ``ShiftPair.from_labeled``. ``target_unlabeled`` and the hidden
    dataset share the same rows; only scoring code should call
    ``hidden_target``.
    """

    source: Dataset
    target_unlabeled: Dataset
    _target_hidden: Dataset = field(repr=False)
    split_seed: int = 0
    val_fraction: float = DEFAULT_VAL_FRACTION
    access_log: List[str] = field(default_factory=list)

    @classmethod
    def from_labeled(
        cls,
        source: Dataset,
        target_labeled: Dataset,
        split_seed: int = 0,
        val_fraction: float = DEFAULT_VAL_FRACTION,
    ) -> "ShiftPair":
        source.require_labels()
        if source.dim != target_labeled.dim:
            raise InvalidInputError(
                f"source has {source.dim} features but target has {target_labeled.dim}"
            )
        hidden = Dataset(
            target_labeled.features,
            target_labeled.labels,
            DomainTag.TARGET,
            target_labeled.name,
            target_labeled.num_classes,
        )
        return cls(source, hidden.without_labels(), hidden, split_seed, val_fraction)

    @property
    def name(self) -> str:
        return self.source.name

    @property
    def target(self) -> Dataset:
        return self.target_unlabeled

    @property
    def has_hidden_labels(self) -> bool:
        return self._target_hidden.labels is not None

    def hidden_target(self, purpose: str) -> Dataset:
        """Return the labeled target set and record why it was read."""
        self.access_log.append(purpose)
        logger.info(f"Hidden target labels read for '{purpose}' ({self.name})")
        return self._target_hidden

    def standardized(self) -> "ShiftPair":
        """Standardise both domains with statistics of the source features."""
        scaler = Standardizer.fit(self.source.features)
        hidden = scaler.transform(self._target_hidden)
        return ShiftPair(
            scaler.transform(self.source),
            hidden.without_labels(),
            hidden,
            self.split_seed,
            self.val_fraction,
            self.access_log,
        )

    def source_split(self) -> Tuple[Dataset, Dataset]:
        return split(self.source, self.val_fraction, self.split_seed)


# ============================================================================
# Synthetic generators
# ============================================================================


def _binary_dataset(features, labels, tag, name) -> Dataset:
    return Dataset(features, labels, tag, name, num_classes=2)


def make_toy2d(epsilon: float, n_per_domain: int, seed: int) -> ShiftPair:
    """
    Two-band toy problem with a small label-prior shift.

    Source points lie on the band y in [0.8, 1.2], target points on
    y in [-1.2, -0.8]; class 1 sits at x ~ +1, class 0 at x ~ -1
    (Gaussian jitter 0.15). p_S(y=1) = 0.5 + epsilon, p_T(y=1) = 0.5 - epsilon.

    Raises:
        InvalidInputError: if epsilon is outside [0, 0.25] or n_per_domain < 40
    """
    if not 0.0 <= epsilon <= 0.25:
        raise InvalidInputError(f"epsilon must be in [0, 0.25], got {epsilon}")
    if n_per_domain < 40:
        raise InvalidInputError(f"n_per_domain must be >= 40, got {n_per_domain}")
    streams = RngStreams(seed).child("toy2d")

    def draw(label: str, p_one: float, band: Tuple[float, float], tag: DomainTag) -> Dataset:
        rng = streams.stream(label)
        y = (rng.random(n_per_domain) < p_one).astype(np.int64)
        x0 = np.where(y == 1, 1.0, -1.0) + rng.normal(0.0, TOY_JITTER, n_per_domain)
        x1 = rng.uniform(band[0], band[1], n_per_domain)
        return _binary_dataset(np.column_stack([x0, x1]), y, tag, "toy2d")

    source = draw("source", 0.5 + epsilon, TOY_BAND, DomainTag.SOURCE)
    target = draw("target", 0.5 - epsilon, (-TOY_BAND[1], -TOY_BAND[0]), DomainTag.TARGET)
    return ShiftPair.from_labeled(source, target, split_seed=seed)


def _rotate(points: np.ndarray, degrees: float) -> np.ndarray:
    theta = math.radians(degrees)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    return points @ rot.T


def make_moons_shift(rotation_deg: float, noise: float, n: int, seed: int) -> ShiftPair:
    """
    Two interleaved moons (centred at the origin); the target sample is
    drawn from the same distribution and rotated by ``rotation_deg``.

    Raises:
        InvalidInputError: if rotation_deg is outside [0, 180], noise < 0 or n < 2
    """
    if not 0.0 <= rotation_deg <= 180.0:
        raise InvalidInputError(f"rotation_deg must be in [0, 180], got {rotation_deg}")
    if noise < 0:
        raise InvalidInputError(f"noise must be >= 0, got {noise}")
    if n < 2:
        raise InvalidInputError(f"n must be >= 2, got {n}")
    streams = RngStreams(seed).child("moons")
    xs, ys = make_moons(n_samples=n, noise=noise, random_state=streams.derive_seed("source"))
    xt, yt = make_moons(n_samples=n, noise=noise, random_state=streams.derive_seed("target"))
    source = _binary_dataset(xs - MOONS_CENTER, ys, DomainTag.SOURCE, "moons")
    target = _binary_dataset(_rotate(xt - MOONS_CENTER, rotation_deg), yt, DomainTag.TARGET, "moons")
    return ShiftPair.from_labeled(source, target, split_seed=seed)


def make_gauss_shift(mean_shift: float, n: int, seed: int) -> ShiftPair:
    """
    Two Gaussian classes centred at (-1, 0) and (+1, 0); in the target both
    class means move by ``mean_shift`` along the first axis.
    """
    if n < 2:
        raise InvalidInputError(f"n must be >= 2, got {n}")
    streams = RngStreams(seed).child("gauss")
    means = np.array([[-1.0, 0.0], [1.0, 0.0]])

    def draw(label: str, offset: float, tag: DomainTag) -> Dataset:
        rng = streams.stream(label)
        y = rng.integers(0, 2, n)
        x = means[y] + np.array([offset, 0.0]) + rng.normal(0.0, GAUSS_STD, (n, 2))
        return _binary_dataset(x, y, tag, "gauss")

    return ShiftPair.from_labeled(
        draw("source", 0.0, DomainTag.SOURCE),
        draw("target", float(mean_shift), DomainTag.TARGET),
        split_seed=seed,
    )


# ============================================================================
# File loaders
# ============================================================================


def load_csv(
    path: Union[str, Path],
    label_column: Optional[int] = -1,
    has_header: bool = False,
    domain_tag: DomainTag = DomainTag.SOURCE,
    num_classes: Optional[int] = None,
) -> Dataset:
    """
    Read comma-separated floats, one point per row.

    Args:
        path: CSV file path
        label_column: Column index holding integer labels (negative indices
            count from the end); None for unlabeled files
        has_header: Skip the first row
        domain_tag: Tag of the resulting dataset
        num_classes: K; inferred as max label + 1 (at least 2) when omitted

    Raises:
        FileNotFoundError: if the file does not exist
        FormatError: on ragged rows or non-numeric fields (names the line)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"CSV file not found: {path}")
    rows: List[List[float]] = []
    width: Optional[int] = None
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_no, row in enumerate(csv.reader(f), 1):
            if has_header and line_no == 1:
                continue
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"{path}: line {line_no}: expected {width} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as e:
                raise FormatError(f"{path}: line {line_no}: {e}") from e
    if not rows:
        raise FormatError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    labels = None
    if label_column is not None:
        col = label_column % table.shape[1]
        raw = table[:, col]
        if not np.all(raw == np.round(raw)) or raw.min() < 0:
            raise FormatError(f"{path}: label column {label_column} must hold non-negative integers")
        labels = raw.astype(np.int64)
        table = np.delete(table, col, axis=1)
    k = num_classes or max(2, int(labels.max()) + 1 if labels is not None else 2)
    return Dataset(table, labels, domain_tag, path.stem, k)


def _read_idx(path: Path, expected_magic: int) -> Tuple[Tuple[int, ...], bytes]:
    data = path.read_bytes()
    if len(data) < 4:
        raise FormatError(f"{path}: truncated IDX header at offset {len(data)}")
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic != expected_magic:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise FormatError(f"{path}: truncated IDX dimensions at offset {len(data)}")
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    payload = data[header_end:]
    expected = int(np.prod(dims))
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload has {len(payload)} bytes at offset {header_end}, expected {expected}"
        )
    return dims, payload


def load_idx(
    images_path: Union[str, Path],
    labels_path: Optional[Union[str, Path]] = None,
    domain_tag: DomainTag = DomainTag.SOURCE,
    num_classes: int = 10,
) -> Dataset:
    """
    Read an IDX image file (magic 0x00000803) and optional label file
    (magic 0x00000801). Pixels are scaled to [0, 1].

    Raises:
        FormatError: on bad magic, truncated payloads, zero images or
            count mismatch
    """
    images_path = Path(images_path)
    for p in (images_path, labels_path):
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(f"IDX file not found: {p}")
    dims, payload = _read_idx(images_path, IDX_IMAGES_MAGIC)
    n = dims[0]
    if n == 0 or 0 in dims[1:]:
        raise FormatError(f"{images_path}: IDX header declares an empty image set (dimensions {dims})")
    features = np.frombuffer(payload, dtype=np.uint8).reshape(n, -1).astype(np.float64) / 255.0
    labels = None
    if labels_path is not None:
        label_dims, label_payload = _read_idx(Path(labels_path), IDX_LABELS_MAGIC)
        if label_dims[0] != n:
            raise FormatError(f"image/label count mismatch: {n} images vs {label_dims[0]} labels")
        labels = np.frombuffer(label_payload, dtype=np.uint8).astype(np.int64)
    return Dataset(features, labels, domain_tag, images_path.stem, num_classes)


# ============================================================================
# Splits
# ============================================================================


def split(dataset: Dataset, val_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Seeded shuffle, then cut into (train, validation).

    Raises:
        InvalidInputError: if val_fraction is outside (0, 1) or n < 2
    """
    if not 0.0 < val_fraction < 1.0:
        raise InvalidInputError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = len(dataset)
    if n < 2:
        raise InvalidInputError(f"cannot split a dataset of {n} point(s)")
    order = RngStreams(seed).stream(f"split/{dataset.name}/{dataset.domain_tag.value}").permutation(n)
    n_val = min(max(int(round(n * val_fraction)), 1), n - 1)
    return (
        dataset.subset(np.sort(order[n_val:]), f"{dataset.name}_train"),
        dataset.subset(np.sort(order[:n_val]), f"{dataset.name}_val"),
    )
