"""Datasets: IDX and raw labeled-binary loaders, splits, augmentation, synthetic tasks.

Samples are always addressed by their index in the original dataset; splits
and subsets are index arrays, never copies, so statistics gathered on any
subset line up with the full dataset.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, InputError
from .rng import SPLIT_STREAM, RngStream


@dataclass
class Dataset:
    inputs: np.ndarray            # uint8 [N, C, H, W] pixel levels, or float [N, ...] reals
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"
    mean: Optional[Sequence[float]] = None   # per-channel normalization, applied after scaling uint8 to [0, 1]
    std: Optional[Sequence[float]] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.inputs) != len(self.labels):
            raise InputError("inputs and labels differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InputError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def sample_shape(self) -> tuple:
        return tuple(self.inputs.shape[1:])

    @cached_property
    def features(self) -> np.ndarray:
        """Float64 network inputs, scaled and normalized."""
        x = self.inputs.astype(np.float64)
        if self.inputs.dtype == np.uint8:
            x /= 255.0
        if self.mean is not None:
            shape = (1, -1) + (1,) * (x.ndim - 2)
            x = (x - np.asarray(self.mean).reshape(shape)) / np.asarray(self.std).reshape(shape)
        return x


# ---------------------------------------------------------------------------
# IDX

_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.decompress(path.read_bytes())
    return path.read_bytes()


def read_idx(path) -> np.ndarray:
    """Array stored in an IDX file (optionally gzip-compressed)."""
    data = _read_bytes(path)
    if len(data) < 4 or data[0] != 0 or data[1] != 0 or data[2] not in _IDX_TYPES:
        raise FormatError(f"{path}: bad IDX magic")
    dtype, ndim = np.dtype(_IDX_TYPES[data[2]]), data[3]
    if len(data) < 4 + 4 * ndim:
        raise FormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", data[4:4 + 4 * ndim])
    size = int(np.prod(dims)) * dtype.itemsize
    body = data[4 + 4 * ndim:]
    if len(body) != size:
        raise FormatError(f"{path}: IDX body has {len(body)} bytes, expected {size}")
    return np.frombuffer(body, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    code = {np.dtype(v).newbyteorder("="): k for k, v in _IDX_TYPES.items()}.get(array.dtype)
    if code is None:
        raise InputError(f"dtype {array.dtype} not representable in IDX")
    header = bytes([0, 0, code, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    payload = header + array.astype(_IDX_TYPES[code]).tobytes()
    path = Path(path)
    path.write_bytes(gzip.compress(payload, mtime=0) if path.suffix == ".gz" else payload)


def load_idx(images_path, labels_path, num_classes: Optional[int] = None, name: str = "idx") -> Dataset:
    """Image/label IDX pair. 3-D image arrays ``[N, H, W]`` gain a channel axis."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if labels.ndim != 1:
        raise FormatError(f"{labels_path}: labels must be one-dimensional")
    if images.ndim == 3:
        images = images[:, None]
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 1
    return Dataset(images, labels.astype(np.int64), num_classes, name)


# ---------------------------------------------------------------------------
# raw labeled binary: records of [label u8][C*H*W pixels u8]


def load_raw_labeled(path, channels: int, height: int, width: int, num_classes: int,
                     name: str = "raw") -> Dataset:
    data = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    rec = 1 + channels * height * width
    if data.size % rec:
        raise FormatError(f"{path}: length {data.size} is not a multiple of record size {rec}")
    rows = data.reshape(-1, rec)
    labels = rows[:, 0].astype(np.int64)
    if labels.size and labels.max() >= num_classes:
        raise FormatError(f"{path}: label {labels.max()} >= class count {num_classes}")
    images = rows[:, 1:].reshape(-1, channels, height, width).copy()
    return Dataset(images, labels, num_classes, name)


def save_raw_labeled(path, dataset: Dataset) -> None:
    if dataset.inputs.dtype != np.uint8 or dataset.inputs.ndim != 4:
        raise InputError("raw labeled format stores uint8 [N, C, H, W] images only")
    if dataset.num_classes > 256:
        raise InputError("raw labeled format stores labels as single bytes")
    rows = np.concatenate([dataset.labels.astype(np.uint8)[:, None],
                           dataset.inputs.reshape(len(dataset), -1)], axis=1)
    Path(path).write_bytes(rows.tobytes())


def quantize(dataset: Dataset) -> Dataset:
    """Map a real-valued dataset onto uint8 levels (for raw-format export)."""
    x = dataset.inputs.astype(np.float64)
    lo, hi = x.min(), x.max()
    scaled = np.round((x - lo) / (hi - lo or 1.0) * 255.0).astype(np.uint8)
    if scaled.ndim == 2:
        scaled = scaled[:, None, None, :]
    return Dataset(scaled, dataset.labels, dataset.num_classes, dataset.name)


# ---------------------------------------------------------------------------
# splits and augmentation


@dataclass(frozen=True)
class SplitSpec:
    val_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.val_fraction < 1.0:
            raise InputError("val_fraction must lie in [0, 1)")


def split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Sorted (train, val) index arrays partitioning ``range(len(dataset))``."""
    n = len(dataset)
    perm = RngStream(spec.seed, SPLIT_STREAM).permutation(n)
    n_val = int(round(n * spec.val_fraction))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


@dataclass(frozen=True)
class AugmentConfig:
    pad: int = 4
    random_crop: bool = True
    horizontal_flip: bool = True

    def __post_init__(self):
        if self.pad < 0:
            raise InputError("pad must be non-negative")


def crop_offsets(batch_size: int, pad: int, rng: RngStream) -> np.ndarray:
    return rng.integers(0, 2 * pad + 1, size=(batch_size, 2))


def augment(batch: np.ndarray, cfg: AugmentConfig, rng: RngStream,
            force_flip: Optional[bool] = None) -> np.ndarray:
    """Zero-pad, random-crop back to size, then flip each image with probability 1/2.

    Draw order per batch: crop offsets, then flip coins. Non-image batches pass through.
    """
    if batch.ndim != 4:
        return batch
    n, _, h, w = batch.shape
    out = batch
    if cfg.random_crop and cfg.pad:
        p = cfg.pad
        padded = np.pad(batch, ((0, 0), (0, 0), (p, p), (p, p)))
        off = crop_offsets(n, p, rng)
        out = np.empty_like(batch)
        for i in range(n):
            dy, dx = off[i]
            out[i] = padded[i, :, dy:dy + h, dx:dx + w]
    if cfg.horizontal_flip or force_flip is not None:
        flip = np.full(n, force_flip) if force_flip is not None else rng.uniform(size=n) < 0.5
        if flip.any():
            out = out.copy() if out is batch else out
            out[flip] = out[flip, :, :, ::-1]
    return out


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SynthSpec:
    """Gaussian class clusters with a share of deliberately ambiguous samples.

    Each class owns ``modes`` centers of norm ``separation``; ordinary samples
    are a uniformly chosen center of their class plus isotropic noise of scale
    ``spread``. For image-shaped ``dims`` the centers are constant over
    ``smooth`` x ``smooth`` pixel blocks, giving them spatial structure. An ``ambiguous_fraction``
    of each class sits between its own center and a random other center, at
    interpolation weight uniform in ``ambiguity_range``, so their label is hard
    to learn and easy to forget.
    """

    classes: int = 10
    dims: tuple = (1, 8, 8)
    per_class: int = 1000
    test_per_class: int = 200
    spread: float = 1.0
    separation: float = 5.0
    ambiguous_fraction: float = 0.1
    ambiguity_range: tuple = (0.35, 0.55)
    modes: int = 4
    smooth: int = 2
    seed: int = 0


def synthesize(spec: SynthSpec, part: str = "train") -> Dataset:
    if part not in ("train", "test"):
        raise InputError("part must be 'train' or 'test'")
    dims = (spec.dims,) if isinstance(spec.dims, int) else tuple(spec.dims)
    d = int(np.prod(dims))
    centers_rng = RngStream(spec.seed, 0)
    if len(dims) == 3 and spec.smooth > 1:
        c, h, w = dims
        k = spec.smooth
        coarse = centers_rng.normal(size=(spec.classes, spec.modes, c, -(-h // k), -(-w // k)))
        fine = np.kron(coarse, np.ones((k, k)))[..., :h, :w]
        centers = fine.reshape(spec.classes, spec.modes, d)
    else:
        centers = centers_rng.normal(size=(spec.classes, spec.modes, d))
    centers *= spec.separation / np.linalg.norm(centers, axis=2, keepdims=True)
    rng = RngStream(spec.seed, 1 if part == "train" else 2)
    per = spec.per_class if part == "train" else spec.test_per_class
    n_amb = int(round(per * spec.ambiguous_fraction))
    xs, ys = [], []
    for c in range(spec.classes):
        base = centers[c][rng.integers(0, spec.modes, size=per)]
        if n_amb and spec.classes > 1:
            others = rng.integers(0, spec.classes - 1, size=n_amb)
            others = others + (others >= c)
            t = rng.uniform(*spec.ambiguity_range, size=(n_amb, 1))
            other_centers = centers[others, rng.integers(0, spec.modes, size=n_amb)]
            base[:n_amb] = (1 - t) * base[:n_amb] + t * other_centers
        xs.append(base + spec.spread * rng.normal(size=(per, d)))
        ys.append(np.full(per, c))
    x = np.concatenate(xs).reshape((-1,) + dims)
    y = np.concatenate(ys)
    order = rng.permutation(y.size)
    return Dataset(x[order], y[order], spec.classes, f"synthetic-{part}")


@dataclass
class Task:
    """Training set with its train/validation split plus a held-out test set."""

    train: Dataset
    test: Dataset
    train_idx: np.ndarray
    val_idx: np.ndarray
    augment: Optional[AugmentConfig] = None
    meta: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return self.train.num_classes

    @property
    def input_shape(self) -> tuple:
        return self.train.sample_shape

    def val_data(self):
        return self.train.features[self.val_idx], self.train.labels[self.val_idx]

    def test_data(self):
        return self.test.features, self.test.labels


def make_task(train: Dataset, test: Dataset, split_spec: SplitSpec = SplitSpec(),
              augment_cfg: Optional[AugmentConfig] = None) -> Task:
    tr, va = split(train, split_spec)
    return Task(train, test, tr, va, augment_cfg)
