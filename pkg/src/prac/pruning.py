"""Binary masks over prunable weights, magnitude pruning, and mask metrics."""

from __future__ import annotations

import math
import struct
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import FormatError, InputError, ShapeError


class SparseMask(Mapping):
    """Boolean array per prunable parameter, in parameter order."""

    def __init__(self, masks: Mapping[str, np.ndarray]):
        self._m = {n: np.asarray(v, dtype=bool) for n, v in masks.items()}

    @classmethod
    def ones(cls, params) -> "SparseMask":
        return cls({n: np.ones(params[n].shape, dtype=bool) for n in params.prunable})

    @classmethod
    def zeros(cls, params) -> "SparseMask":
        return cls({n: np.zeros(params[n].shape, dtype=bool) for n in params.prunable})

    @classmethod
    def from_flat(cls, flat: np.ndarray, like: "SparseMask") -> "SparseMask":
        out, pos = {}, 0
        for n, v in like.items():
            out[n] = np.asarray(flat[pos:pos + v.size], dtype=bool).reshape(v.shape)
            pos += v.size
        if pos != flat.size:
            raise ShapeError("flat mask length does not match layout")
        return cls(out)

    def __getitem__(self, name):
        return self._m[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._m)

    def __len__(self):
        return len(self._m)

    @property
    def total(self) -> int:
        return sum(v.size for v in self._m.values())

    def count(self) -> int:
        return int(sum(int(v.sum()) for v in self._m.values()))

    def flat(self) -> np.ndarray:
        if not self._m:
            return np.zeros(0, dtype=bool)
        return np.concatenate([v.ravel() for v in self._m.values()])

    def copy(self) -> "SparseMask":
        return SparseMask({n: v.copy() for n, v in self._m.items()})

    def layer_counts(self) -> dict[str, int]:
        return {n: int(v.sum()) for n, v in self._m.items()}

    def is_subset_of(self, other: "SparseMask") -> bool:
        _check_same_layout(self, other)
        return all(not np.any(self._m[n] & ~other[n]) for n in self._m)

    def __eq__(self, other):
        if not isinstance(other, SparseMask) or list(self) != list(other):
            return NotImplemented if not isinstance(other, SparseMask) else False
        return all(self._m[n].shape == other[n].shape and np.array_equal(self._m[n], other[n]) for n in self._m)

    def __repr__(self):
        return f"SparseMask({self.count()}/{self.total} kept)"


def _check_same_layout(a: Mapping, b: Mapping):
    if list(a) != list(b) or any(np.shape(a[n]) != np.shape(b[n]) for n in a):
        raise ShapeError("masks are not aligned")


@dataclass(frozen=True)
class PruneConfig:
    ratio: float = 0.2
    scope: str = "global"  # or "layer"

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise InputError(f"prune ratio must lie in (0, 1), got {self.ratio}")
        if self.scope not in ("global", "layer"):
            raise InputError(f"unknown prune scope {self.scope!r}")


def _prune_by_scores(scores: Mapping[str, np.ndarray], mask: SparseMask, ratio: float, scope: str) -> SparseMask:
    # Lowest score first; stable argsort gives the (parameter order, flat index) tie-break.
    groups = [list(mask)] if scope == "global" else [[n] for n in mask]
    out = {n: v.copy() for n, v in mask.items()}
    for names in groups:
        flat_mask = np.concatenate([mask[n].ravel() for n in names])
        flat_scores = np.concatenate([np.asarray(scores[n]).ravel() for n in names])
        alive = np.flatnonzero(flat_mask)
        k = math.floor(ratio * alive.size)
        if alive.size == 0 and scope == "layer":
            continue
        if alive.size == 0 or k >= alive.size:
            raise InputError("pruning would remove every remaining weight")
        if k == 0:
            continue
        order = np.argsort(flat_scores[alive], kind="stable")
        flat_mask = flat_mask.copy()
        flat_mask[alive[order[:k]]] = False
        pos = 0
        for n in names:
            size = mask[n].size
            out[n] = flat_mask[pos:pos + size].reshape(mask[n].shape)
            pos += size
    return SparseMask(out)


def global_magnitude_prune(params, mask: SparseMask, cfg: PruneConfig = PruneConfig()) -> SparseMask:
    """Remove ``floor(ratio * remaining)`` surviving weights of smallest ``|w|``.

    With ``scope="global"`` the ranking spans all prunable tensors; with
    ``"layer"`` each tensor loses ``floor(ratio * remaining_in_layer)``.
    """
    _check_same_layout(mask, {n: params[n] for n in params.prunable})
    return _prune_by_scores({n: np.abs(params[n]) for n in mask}, mask, cfg.ratio, cfg.scope)


def prune_by_scores(scores: Mapping[str, np.ndarray], mask: SparseMask, cfg: PruneConfig = PruneConfig()) -> SparseMask:
    """Same rule as magnitude pruning with arbitrary per-weight scores (lowest pruned)."""
    _check_same_layout(mask, scores)
    return _prune_by_scores(scores, mask, cfg.ratio, cfg.scope)


def candidate_mask(params, mask: SparseMask, cfg: PruneConfig = PruneConfig()) -> SparseMask:
    """The mask the next pruning step would produce; inputs are left untouched."""
    return global_magnitude_prune(params, mask, cfg)


def sparsity(mask: SparseMask) -> float:
    total = mask.total
    if total == 0:
        raise InputError("empty mask")
    return 1.0 - mask.count() / total


def hamming(m1: SparseMask, m2: SparseMask) -> tuple[int, float]:
    """Number of differing positions, and that number over the mask size."""
    _check_same_layout(m1, m2)
    count = int(sum(int(np.count_nonzero(m1[n] != m2[n])) for n in m1))
    return count, count / m1.total


def relative_similarity(m1: SparseMask, m2: SparseMask) -> float:
    """Intersection over union of the kept positions."""
    _check_same_layout(m1, m2)
    inter = sum(int(np.count_nonzero(m1[n] & m2[n])) for n in m1)
    union = sum(int(np.count_nonzero(m1[n] | m2[n])) for n in m1)
    if union == 0:
        raise InputError("relative similarity undefined for two empty masks")
    return inter / union


def sparsity_after(rounds: int, ratio: float = 0.2) -> float:
    """Closed-form sparsity ``1 - (1 - ratio)**rounds`` of iterative pruning from dense."""
    return 1.0 - (1.0 - ratio) ** rounds


def rounds_to_exceed(target: float, ratio: float = 0.2) -> int:
    """Smallest ``k`` with ``1 - (1 - ratio)**k > target``."""
    k = 0
    while sparsity_after(k, ratio) <= target:
        k += 1
    return k


# ---------------------------------------------------------------------------
# mask files

_MASK_MAGIC = b"MASK"
_MASK_VERSION = 1


def save_mask(path, mask: SparseMask) -> None:
    """Magic ``MASK``, u32 version, u32 count; per entry u32 name length, UTF-8
    name, u64 bit length, then the bits packed little-endian (LSB first)."""
    parts = [_MASK_MAGIC, struct.pack("<II", _MASK_VERSION, len(mask))]
    for name, bits in mask.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw + struct.pack("<Q", bits.size))
        parts.append(np.packbits(bits.ravel(), bitorder="little").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_mask(path, shapes: Optional[Mapping[str, tuple]] = None) -> SparseMask:
    """Read a mask file. Without ``shapes`` every entry comes back one-dimensional."""
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated mask file")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != _MASK_MAGIC:
        raise FormatError(f"{path}: bad mask magic")
    version, count = struct.unpack("<II", take(8))
    if version != _MASK_VERSION:
        raise FormatError(f"{path}: unsupported mask version {version}")
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        try:
            name = take(nlen).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: bad entry name") from exc
        (nbits,) = struct.unpack("<Q", take(8))
        packed = np.frombuffer(take((nbits + 7) // 8), dtype=np.uint8)
        bits = np.unpackbits(packed, count=nbits, bitorder="little").astype(bool)
        if shapes is not None:
            if name not in shapes or int(np.prod(shapes[name])) != nbits:
                raise FormatError(f"{path}: entry {name!r} does not match expected shape")
            bits = bits.reshape(shapes[name])
        out[name] = bits
    if pos != len(data):
        raise FormatError(f"{path}: trailing bytes in mask file")
    return SparseMask(out)
