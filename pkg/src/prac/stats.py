"""Per-sample training statistics and PrAC set assembly.

The forgetting ledger counts, for every sample of the base training set,
how often it went from correctly to incorrectly classified between two
consecutive presentations. Samples selected from the ledger (CET) are merged
with samples on which the network and its freshly pruned version disagree
(CEP) to form the PrAC set. All indices are positions in the original dataset.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import FormatError, InputError
from .nn import NetworkSpec, ParameterSet, predict


class ForgettingLedger:
    """Columnar forgetting statistics for ``size`` samples."""

    def __init__(self, size: int):
        self.last_correct = np.zeros(size, dtype=bool)
        self.ever_correct = np.zeros(size, dtype=bool)
        self.forget_count = np.zeros(size, dtype=np.int64)
        self.presentations = np.zeros(size, dtype=np.int64)

    def __len__(self):
        return self.forget_count.size

    def record(self, indices: np.ndarray, correct: np.ndarray) -> None:
        """Apply one presentation to each of ``indices`` (which must be unique)."""
        indices = np.asarray(indices, dtype=np.int64)
        correct = np.asarray(correct, dtype=bool)
        if indices.size != np.unique(indices).size:
            raise InputError("duplicate indices in a single presentation")
        forgot = self.last_correct[indices] & ~correct
        self.forget_count[indices] += forgot
        self.last_correct[indices] = correct
        self.ever_correct[indices] |= correct
        self.presentations[indices] += 1

    def never_learned(self) -> np.ndarray:
        return (self.presentations > 0) & ~self.ever_correct

    def check(self) -> None:
        if np.any(self.forget_count > self.presentations):
            raise AssertionError("forget count exceeds presentations")
        nl = ~self.ever_correct
        if np.any(self.forget_count[nl] != 0) or np.any(self.last_correct[nl]):
            raise AssertionError("never-correct sample with forgetting history")


def record_presentation(ledger: ForgettingLedger, index: int, correct: bool) -> ForgettingLedger:
    if not 0 <= index < len(ledger):
        raise InputError(f"sample index {index} outside ledger")
    ledger.record(np.array([index]), np.array([correct]))
    return ledger


@dataclass(frozen=True)
class SelectionConfig:
    forget_threshold: int = 0
    include_never_learned: bool = True


def select_cet(ledger: ForgettingLedger, cfg: SelectionConfig = SelectionConfig(),
               within: Optional[np.ndarray] = None) -> np.ndarray:
    """Sorted indices with forget count above the threshold (plus never-learned samples)."""
    pick = ledger.forget_count > cfg.forget_threshold
    if cfg.include_never_learned:
        pick |= ledger.never_learned()
    idx = np.flatnonzero(pick)
    if within is not None:
        idx = np.intersect1d(idx, np.asarray(within, dtype=np.int64))
    return idx.astype(np.int64)


def select_cep(net: NetworkSpec, params: ParameterSet, old_mask: Mapping, new_mask: Mapping,
               x: np.ndarray, indices: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Indices whose argmax under ``old_mask`` differs from that under ``new_mask``.

    ``x`` is the un-augmented feature array of the whole dataset.
    """
    indices = np.asarray(indices, dtype=np.int64)
    before = predict(net, params, old_mask, x[indices], batch_size)
    after = predict(net, params, new_mask, x[indices], batch_size)
    return np.sort(indices[before != after])


@dataclass
class PrACSet:
    indices: np.ndarray
    from_cet: np.ndarray
    from_cep: np.ndarray

    def __len__(self):
        return self.indices.size

    @property
    def n_cet(self) -> int:
        return int(self.from_cet.sum())

    @property
    def n_cep(self) -> int:
        return int(self.from_cep.sum())


def build_prac(cet: np.ndarray, cep: np.ndarray) -> PrACSet:
    cet = np.unique(np.asarray(cet, dtype=np.int64))
    cep = np.unique(np.asarray(cep, dtype=np.int64))
    idx = np.union1d(cet, cep)
    return PrACSet(idx, np.isin(idx, cet), np.isin(idx, cep))


def overlap_rate(cep: np.ndarray, cet: np.ndarray) -> float:
    """Fraction of CEP samples that are also in CET."""
    cep = np.unique(np.asarray(cep, dtype=np.int64))
    if cep.size == 0:
        raise InputError("overlap rate undefined for an empty CEP set")
    return np.intersect1d(cep, cet).size / cep.size


def class_histogram(prac, labels: np.ndarray, num_classes: int) -> np.ndarray:
    idx = prac.indices if isinstance(prac, PrACSet) else np.asarray(prac, dtype=np.int64)
    return np.bincount(np.asarray(labels)[idx], minlength=num_classes)


def forgetting_histogram(ledger: ForgettingLedger) -> dict:
    """Counts by forget count; presented-but-never-correct samples go to the ``"never"`` bin."""
    nl = ledger.never_learned()
    hist = {"never": int(nl.sum())}
    counts = np.bincount(ledger.forget_count[~nl])
    for k, c in enumerate(counts):
        if c:
            hist[k] = int(c)
    return hist


# ---------------------------------------------------------------------------
# text export

_HEADER = re.compile(r"^# prac round=(\d+) \|CET\|=(\d+) \|CEP\|=(\d+) \|PrAC\|=(\d+)$")


def save_prac(path, prac: PrACSet, round_index: int, n_cet: int, n_cep: int) -> None:
    lines = [f"# prac round={round_index} |CET|={n_cet} |CEP|={n_cep} |PrAC|={len(prac)}"]
    lines += [str(int(i)) for i in prac.indices]
    Path(path).write_text("\n".join(lines) + "\n")


def load_prac(path) -> tuple[np.ndarray, dict]:
    """Indices and header fields (``round``, ``cet``, ``cep``, ``prac``) of a PrAC export."""
    text = Path(path).read_text().splitlines()
    if not text:
        raise FormatError(f"{path}: empty PrAC file")
    m = _HEADER.match(text[0])
    if not m:
        raise FormatError(f"{path}: bad PrAC header {text[0]!r}")
    header = dict(zip(("round", "cet", "cep", "prac"), map(int, m.groups())))
    try:
        idx = np.array([int(line) for line in text[1:] if line.strip()], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer index") from exc
    if idx.size != header["prac"]:
        raise FormatError(f"{path}: header says {header['prac']} indices, found {idx.size}")
    if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0):
        raise FormatError(f"{path}: indices must be sorted, unique, non-negative")
    return idx, header
