"""CSV and SVG reports over saved run directories.

Every number in a report is computed into a CSV first; the SVG chart is drawn
from that CSV alone.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Optional
from xml.sax.saxutils import escape

import numpy as np

from ..errors import InputError
from ..pruning import SparseMask, hamming, load_mask, relative_similarity
from .runner import read_summary


def is_run_dir(path: Path) -> bool:
    return (path / "config.txt").is_file() and (path / "round_1").is_dir()


def find_runs(dirs: Iterable) -> list[Path]:
    """Run directories given directly or as children of experiment directories."""
    runs = []
    for d in map(Path, dirs):
        if not d.is_dir():
            raise InputError(f"{d}: not a directory")
        if is_run_dir(d):
            runs.append(d)
        else:
            runs += sorted(c for c in d.iterdir() if c.is_dir() and is_run_dir(c))
    if not runs:
        raise InputError("no run directories found")
    return runs


def round_dirs(run: Path) -> list[Path]:
    out, k = [], 1
    while (run / f"round_{k}").is_dir():
        out.append(run / f"round_{k}")
        k += 1
    return out


def load_run_masks(run: Path) -> list[SparseMask]:
    return [load_mask(rd / "mask.bin") for rd in round_dirs(run)]


def _layout(mask: SparseMask) -> tuple:
    return tuple((n, m.size) for n, m in mask.items())


def _write(path: Path, header: list, rows: list) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt(x: Optional[float]) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


# ---------------------------------------------------------------------------
# individual reports


def accuracy_table(runs: list[Path]) -> list[list[str]]:
    groups: dict = {}
    for run in runs:
        if not (run / "summary.csv").exists():
            continue
        for row in read_summary(run / "summary.csv"):
            key = (row["method"], int(row["round"]))
            g = groups.setdefault(key, {"sparsity": float(row["sparsity_pct"]), "acc": []})
            if row["test_acc"]:
                g["acc"].append(float(row["test_acc"]))
    rows = []
    for (method, rnd), g in sorted(groups.items()):
        acc = np.array(g["acc"])
        mean = float(acc.mean()) if acc.size else None
        std = float(acc.std(ddof=1)) if acc.size > 1 else (0.0 if acc.size else None)
        rows.append([method, rnd, f"{g['sparsity']:.6f}", acc.size, _fmt(mean), _fmt(std)])
    return rows


ACCURACY_HEADER = ["method", "round", "sparsity_pct", "runs", "test_acc_mean", "test_acc_std"]


def mask_distance_matrix(labels: list[str], masks: list[SparseMask]) -> np.ndarray:
    """Normalized pairwise Hamming distances; NaN between masks of different layouts."""
    n = len(masks)
    out = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(i, n):
            if _layout(masks[i]) == _layout(masks[j]):
                out[i, j] = out[j, i] = hamming(masks[i], masks[j])[1]
    return out


def similarity_rows(runs: list[Path], all_masks: dict) -> list[list[str]]:
    """Relative similarity between every two runs with the same layout, round by round."""
    rows = []
    names = [r.name for r in runs]
    for a in range(len(runs)):
        for b in range(a + 1, len(runs)):
            ma, mb = all_masks[names[a]], all_masks[names[b]]
            for k, (x, y) in enumerate(zip(ma, mb), 1):
                if _layout(x) != _layout(y):
                    break
                rows.append([names[a], names[b], k, f"{100.0 * (1 - x.count() / x.total):.6f}",
                             f"{relative_similarity(x, y):.6f}"])
    return rows


def _read_small_csv(path: Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return list(csv.reader(fh))[1:]


def forgetting_rows(runs: list[Path]) -> list[list]:
    rows = []
    for run in runs:
        for k, rd in enumerate(round_dirs(run), 1):
            if (rd / "forgetting.csv").exists():
                rows += [[run.name, k, b, c] for b, c in _read_small_csv(rd / "forgetting.csv")]
    return rows


def class_rows(runs: list[Path]) -> list[list]:
    rows = []
    for run in runs:
        for k, rd in enumerate(round_dirs(run), 1):
            if (rd / "classes.csv").exists():
                counts = [(c, int(n)) for c, n in _read_small_csv(rd / "classes.csv")]
                total = sum(n for _, n in counts)
                rows += [[run.name, k, c, n, f"{n / total:.6f}" if total else ""] for c, n in counts]
    return rows


# ---------------------------------------------------------------------------
# SVG


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def accuracy_svg(csv_path: Path, svg_path: Path, width: int = 640, height: int = 400) -> Path:
    """Line chart of mean test accuracy against sparsity, one line per method."""
    series: dict = {}
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["test_acc_mean"]:
                series.setdefault(row["method"], []).append(
                    (float(row["sparsity_pct"]), 100.0 * float(row["test_acc_mean"])))
    pts = [p for s in series.values() for p in s]
    left, right, top, bottom = 60, 150, 20, 50
    pw, ph = width - left - right, height - top - bottom
    x_lo, x_hi = (0.0, 100.0)
    if pts:
        y_lo = math.floor(min(p[1] for p in pts) / 5) * 5
        y_hi = math.ceil(max(p[1] for p in pts) / 5) * 5
    else:
        y_lo, y_hi = 0.0, 100.0
    if y_hi <= y_lo:
        y_hi = y_lo + 5

    def sx(v):
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return top + (1 - (v - y_lo) / (y_hi - y_lo)) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in range(0, 101, 20):
        parts.append(f'<line x1="{sx(t):.1f}" y1="{top + ph}" x2="{sx(t):.1f}" y2="{top + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{sx(t):.1f}" y="{top + ph + 16}" text-anchor="middle">{t}</text>')
    step = max(1, int((y_hi - y_lo) / 5))
    for t in np.arange(y_lo, y_hi + 1e-9, step):
        parts.append(f'<line x1="{left - 4}" y1="{sy(t):.1f}" x2="{left}" y2="{sy(t):.1f}" stroke="black"/>')
        parts.append(f'<text x="{left - 6}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">sparsity (%)</text>')
    parts.append(f'<text x="14" y="{top + ph / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {top + ph / 2})">test accuracy (%)</text>')
    for i, (method, s) in enumerate(sorted(series.items())):
        color = _COLORS[i % len(_COLORS)]
        s = sorted(s)
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in s)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in s:
            parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="{color}"/>')
        ly = top + 14 * i + 10
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 34}" y="{ly + 4}">{escape(method)}</text>')
    parts.append("</svg>")
    Path(svg_path).write_text("\n".join(parts) + "\n")
    return Path(svg_path)


# ---------------------------------------------------------------------------


def report(dirs: Iterable, out: Optional[Path] = None) -> dict:
    """Write every report for the given run or experiment directories; returns the paths."""
    dirs = [Path(d) for d in dirs]
    runs = find_runs(dirs)
    out = Path(out) if out is not None else dirs[0]
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    paths["accuracy"] = _write(out / "accuracy_vs_sparsity.csv", ACCURACY_HEADER, accuracy_table(runs))
    paths["svg"] = accuracy_svg(paths["accuracy"], out / "accuracy_vs_sparsity.svg")

    all_masks = {r.name: load_run_masks(r) for r in runs}
    labels, masks = [], []
    for r in runs:
        for k, m in enumerate(all_masks[r.name], 1):
            labels.append(f"{r.name}/round_{k}")
            masks.append(m)
    dist = mask_distance_matrix(labels, masks)
    paths["distance"] = _write(out / "mask_distance.csv", ["mask"] + labels,
                               [[lab] + [_fmt(v) for v in row] for lab, row in zip(labels, dist)])
    paths["similarity"] = _write(out / "relative_similarity.csv",
                                 ["run_a", "run_b", "round", "sparsity_pct", "relative_similarity"],
                                 similarity_rows(runs, all_masks))
    paths["forgetting"] = _write(out / "forgetting_histograms.csv", ["run", "round", "forget_count", "samples"],
                                 forgetting_rows(runs))
    paths["classes"] = _write(out / "class_ratios.csv", ["run", "round", "class", "count", "ratio"],
                              class_rows(runs))
    return paths


def read_matrix(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][1:]
    vals = np.array([[float(v) if v else np.nan for v in r[1:]] for r in rows[1:]])
    return labels, vals
