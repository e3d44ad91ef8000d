"""Datasets: 2-D toy generators, MNIST ingestion from IDX files, label
encodings, and the noise injectors used by the robustness sweeps.

All generators are pure functions of (parameters, rng); loaders are
read-only.  No downloads happen anywhere: MNIST paths are user-supplied.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import Rng

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


class IdxError(ValueError):
    """Base class for IDX parsing failures."""


class IdxMagicError(IdxError):
    """File does not start with the expected IDX magic number."""


class IdxTruncatedError(IdxError):
    """File is shorter than its header promises."""


class IdxCountMismatchError(IdxError):
    """Image file and label file disagree on the number of items."""


@dataclass
class Dataset:
    """Feature matrix (N x d), integer labels in [0, K), class count K."""

    x: np.ndarray
    labels: np.ndarray
    k: int

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.x.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("x must be 2-D and labels 1-D")
        if self.x.shape[0] != self.labels.shape[0]:
            raise ValueError("x and labels disagree on sample count")
        if self.k <= 0 or (self.labels.size and
                           (self.labels.min() < 0 or self.labels.max() >= self.k)):
            raise ValueError("labels must lie in [0, K)")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def one_hot(self) -> np.ndarray:
        y = np.zeros((self.n, self.k))
        y[np.arange(self.n), self.labels] = 1.0
        return y

    def sign_labels(self) -> np.ndarray:
        """+-1 encoding yhat = 2y - 1."""
        return 2.0 * self.one_hot() - 1.0

    def take(self, n: int) -> "Dataset":
        """First n samples (deterministic subset)."""
        return Dataset(self.x[:n].copy(), self.labels[:n].copy(), self.k)


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    y = np.zeros((labels.shape[0], k))
    y[np.arange(labels.shape[0]), labels] = 1.0
    return y


# ---------------------------------------------------------------------------
# Toy generators
# ---------------------------------------------------------------------------

def checkerboard_class(points: np.ndarray) -> np.ndarray:
    """Class of each point on the 8x8 board over [-1,1]^2: the square is cut
    into 64 cells and cell (ix, iy) gets class (ix + iy) mod 4, so classes
    cycle along diagonals and are balanced."""
    cells = np.floor((np.asarray(points, dtype=np.float64) + 1.0) * 4.0)
    cells = np.clip(cells, 0, 7).astype(np.int64)
    return (cells[:, 0] + cells[:, 1]) % 4


def gen_checkerboard(n_per_split: int, rng: Rng) -> tuple[Dataset, Dataset]:
    """Train/test splits of uniform points on [-1,1]^2 with cyclic cell labels."""
    if n_per_split <= 0:
        raise ValueError("n_per_split must be positive")
    splits = []
    for _ in range(2):
        x = rng.uniform((n_per_split, 2)) * 2.0 - 1.0
        splits.append(Dataset(x, checkerboard_class(x), 4))
    return splits[0], splits[1]


def spiral_point(t: np.ndarray, arm: int, arms: int) -> np.ndarray:
    """Noise-free point of spiral ``arm`` at parameter t in [0,1]: radius t,
    angle 3*pi*t + 2*pi*arm/arms (1.5 turns, unit outer radius)."""
    theta = 3.0 * np.pi * t + 2.0 * np.pi * arm / arms
    return np.stack([t * np.cos(theta), t * np.sin(theta)], axis=-1)


def gen_spiral(n_per_split: int, rng: Rng, arms: int = 4,
               noise_sd: float = 0.02) -> tuple[Dataset, Dataset]:
    """Train/test splits of the ``arms``-class spiral; class counts are exactly
    balanced, so n_per_split must be divisible by arms."""
    if arms < 2:
        raise ValueError("arms must be >= 2")
    if n_per_split % arms != 0:
        raise ValueError(f"n_per_split={n_per_split} not divisible by arms={arms}")
    per_arm = n_per_split // arms
    splits = []
    for _ in range(2):
        xs, ls = [], []
        for arm in range(arms):
            t = rng.uniform(per_arm)
            pts = spiral_point(t, arm, arms)
            if noise_sd > 0.0:
                pts = pts + rng.normal((per_arm, 2), sd=noise_sd)
            xs.append(pts)
            ls.append(np.full(per_arm, arm, dtype=np.int64))
        splits.append(Dataset(np.concatenate(xs), np.concatenate(ls), arms))
    return splits[0], splits[1]


def gen_random_labels(n: int, rng: Rng, d: int = 2, k: int = 4) -> Dataset:
    """Uniform points on [-1,1]^d with labels drawn independently of position."""
    x = rng.uniform((n, d)) * 2.0 - 1.0
    labels = rng.integers(k, size=n)
    return Dataset(x, labels, k)


# ---------------------------------------------------------------------------
# MNIST (IDX format: big-endian magic, dimension sizes, raw bytes)
# ---------------------------------------------------------------------------

def _idx_open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_be32(f, path) -> int:
    raw = f.read(4)
    if len(raw) != 4:
        raise IdxTruncatedError(f"{path}: header ends early")
    return struct.unpack(">i", raw)[0]


def read_idx_images(path) -> np.ndarray:
    """(count, rows, cols) uint8 array from an IDX image file."""
    with _idx_open(path) as f:
        magic = _read_be32(f, path)
        if magic != IDX_IMAGE_MAGIC:
            raise IdxMagicError(f"{path}: image magic {magic}, expected {IDX_IMAGE_MAGIC}")
        count, rows, cols = (_read_be32(f, path) for _ in range(3))
        expected = count * rows * cols
        data = f.read(expected)
        if len(data) != expected:
            raise IdxTruncatedError(
                f"{path}: expected {expected} pixel bytes, found {len(data)}")
        return np.frombuffer(data, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    """(count,) uint8 array from an IDX label file."""
    with _idx_open(path) as f:
        magic = _read_be32(f, path)
        if magic != IDX_LABEL_MAGIC:
            raise IdxMagicError(f"{path}: label magic {magic}, expected {IDX_LABEL_MAGIC}")
        count = _read_be32(f, path)
        data = f.read(count)
        if len(data) != count:
            raise IdxTruncatedError(f"{path}: expected {count} label bytes, found {len(data)}")
        return np.frombuffer(data, dtype=np.uint8)


def load_mnist(images_path, labels_path) -> Dataset:
    """Flattened MNIST split: pixels scaled to [0,1] by /255, labels 0-9."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(
            f"{images.shape[0]} images vs {labels.shape[0]} labels")
    x = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64), 10)


# ---------------------------------------------------------------------------
# Noise injectors
# ---------------------------------------------------------------------------

def add_input_noise(dataset: Dataset, epsilon: float, rng: Rng,
                    interpretation: str = "sd") -> Dataset:
    """Perturb every feature by an independent zero-mean Gaussian.

    ``interpretation`` controls how epsilon parameterises the Gaussian:
    "sd" (default) uses standard deviation epsilon, "variance" uses
    variance epsilon.  Labels are untouched; epsilon 0 is a no-op copy.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if interpretation not in ("sd", "variance"):
        raise ValueError("interpretation must be 'sd' or 'variance'")
    if epsilon == 0.0:
        return Dataset(dataset.x.copy(), dataset.labels.copy(), dataset.k)
    sd = epsilon if interpretation == "sd" else float(np.sqrt(epsilon))
    noisy = dataset.x + rng.normal(dataset.x.shape, sd=sd)
    return Dataset(noisy, dataset.labels.copy(), dataset.k)


def corrupt_labels(dataset: Dataset, fraction: float, rng: Rng) -> Dataset:
    """Replace exactly round(fraction*N) labels, chosen without replacement,
    each by a uniformly random *different* class."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    n = dataset.n
    count = int(round(fraction * n))
    labels = dataset.labels.copy()
    if count > 0:
        idx = rng.choice_without_replacement(n, count)
        offsets = rng.integers(dataset.k - 1, size=count) + 1
        labels[idx] = (labels[idx] + offsets) % dataset.k
    return Dataset(dataset.x.copy(), labels, dataset.k)


# ---------------------------------------------------------------------------
# CSV export (header: x0,...,xd-1,label)
# ---------------------------------------------------------------------------

def dataset_to_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(",".join([f"x{i}" for i in range(dataset.d)] + ["label"]) + "\n")
        for row, label in zip(dataset.x, dataset.labels):
            f.write(",".join(repr(float(v)) for v in row) + f",{label}\n")


def dataset_from_csv(path, k: int | None = None) -> Dataset:
    with open(path) as f:
        header = f.readline().strip().split(",")
        if not header or header[-1] != "label":
            raise ValueError(f"{path}: not a dataset CSV (header {header})")
        rows, labels = [], []
        for line in f:
            parts = line.strip().split(",")
            rows.append([float(v) for v in parts[:-1]])
            labels.append(int(parts[-1]))
    labels = np.asarray(labels, dtype=np.int64)
    return Dataset(np.asarray(rows), labels,
                   k if k is not None else int(labels.max()) + 1 if labels.size else 1)
