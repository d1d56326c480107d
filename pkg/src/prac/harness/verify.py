"""Replay structural invariants over saved run artifacts only."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..nn import load_checkpoint
from ..pruning import hamming, load_mask
from ..stats import load_prac
from .config import parse_config_text
from .report import find_runs, round_dirs
from .runner import read_summary


def verify_run(run: Path) -> list[str]:
    """Problems found in one run directory (empty when intact).

    Unreadable or malformed files raise :class:`FormatError`.
    """
    problems = []
    cfg = parse_config_text((run / "config.txt").read_text())
    ratio = float(cfg.get("ticket.prune_ratio", "0.2"))
    scope = cfg.get("ticket.prune_scope", "global")
    rds = round_dirs(run)
    masks = [load_mask(rd / "mask.bin") for rd in rds]
    layout = [(n, m.size) for n, m in masks[0].items()] if masks else []

    for k, m in enumerate(masks, 1):
        if [(n, a.size) for n, a in m.items()] != layout:
            problems.append(f"round {k}: mask layout differs from round 1")
            return problems
    total = masks[0].total if masks else 0
    prev_count = total
    for k, m in enumerate(masks, 1):
        if k > 1 and not m.is_subset_of(masks[k - 2]):
            problems.append(f"round {k}: mask is not nested in round {k - 1}")
        if scope == "global":
            expected = prev_count - int(np.floor(ratio * prev_count))
            if m.count() != expected:
                problems.append(f"round {k}: {m.count()} weights kept, count recurrence gives {expected}")
        prev_count = m.count()

    for i in range(len(masks)):
        if hamming(masks[i], masks[i])[0] != 0:
            problems.append(f"round {i + 1}: nonzero self-distance")
        for j in range(i + 1, len(masks)):
            if hamming(masks[i], masks[j]) != hamming(masks[j], masks[i]):
                problems.append(f"rounds {i + 1},{j + 1}: asymmetric Hamming distance")

    rewind_path = run / "round_1" / "rewind.bin"
    if rewind_path.exists():
        snap = load_checkpoint(rewind_path)
        for n, size in layout:
            if n not in snap or snap[n].size != size:
                problems.append(f"rewind snapshot does not match mask entry {n!r}")

    prac_sizes = {}
    for k, rd in enumerate(rds, 1):
        if (rd / "prac.txt").exists():
            idx, h = load_prac(rd / "prac.txt")
            prac_sizes[k] = idx.size
            if h["round"] != k:
                problems.append(f"round {k}: PrAC header names round {h['round']}")
            if not max(h["cet"], h["cep"]) <= h["prac"] <= h["cet"] + h["cep"]:
                problems.append(f"round {k}: |PrAC|={h['prac']} inconsistent with |CET|={h['cet']}, |CEP|={h['cep']}")

    if (run / "summary.csv").exists():
        cum = 0
        for row in read_summary(run / "summary.csv"):
            k = int(row["round"])
            if not 1 <= k <= len(masks):
                problems.append(f"summary names round {k} without a mask")
                continue
            cum += int(row["iterations"])
            if int(row["cumulative_iterations"]) != cum:
                problems.append(f"round {k}: cumulative iterations {row['cumulative_iterations']} != {cum}")
            sp = 100.0 * (1 - masks[k - 1].count() / total)
            if abs(float(row["sparsity_pct"]) - sp) > 1e-5:
                problems.append(f"round {k}: summary sparsity {row['sparsity_pct']} != mask sparsity {sp:.6f}")
            if row["prac_size"] and k in prac_sizes and int(row["prac_size"]) != prac_sizes[k]:
                problems.append(f"round {k}: summary |PrAC| {row['prac_size']} != exported {prac_sizes[k]}")
    return problems


def verify(dirs) -> dict[str, list[str]]:
    """Per-run problem lists for every run under ``dirs``."""
    out = {}
    for run in find_runs(dirs if isinstance(dirs, (list, tuple)) else [dirs]):
        try:
            out[str(run)] = verify_run(run)
        except (OSError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{run}: {exc}") from exc
    return out
