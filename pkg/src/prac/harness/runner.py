"""Paired PrAC/baseline runs and their on-disk artifacts.

Layout of an experiment directory ``<output>/<name>/``::

    config.txt              full resolved configuration
    summary.csv             one row per (method, seed, round), columns SUMMARY_COLUMNS
    aggregate.csv           mean/std over seeds per (method, round)
    timing.csv              wall-clock seconds per (method, seed)
    <method>-s<seed>/       one run directory per method and seed
        config.txt          configuration plus ``kind`` and ``seed``
        summary.csv         this run's rows
        round_<k>/mask.bin  mask after round k's pruning
        round_<k>/rewind.bin   rewind snapshot (round 1 only)
        round_<k>/prac.txt  PrAC set built in round k (PrAC runs)
        round_<k>/log.csv   per-epoch training log
        round_<k>/forgetting.csv, classes.csv   ledger and PrAC class statistics
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..baselines import random_prune_sequence, snip_iterative, subset_lt, vanilla_lt
from ..data import Task
from ..errors import InputError
from ..nn import NetworkSpec, ParameterSet, save_checkpoint
from ..pruning import rounds_to_exceed, save_mask
from ..stats import load_prac, save_prac
from ..ticket import (
    RoundContext,
    RunLog,
    TicketResult,
    evaluate_ticket,
    find_ticket,
    imp_search,
    reinitialize,
    rewind,
)
from .config import ExperimentConfig, format_config

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "method", "seed", "round", "sparsity_pct", "prac_size", "train_size", "iterations",
    "cumulative_iterations", "early_stop_epoch", "val_acc", "test_acc",
]
AGGREGATE_COLUMNS = [
    "method", "round", "sparsity_pct", "runs", "test_acc_mean", "test_acc_std",
    "cumulative_iterations_mean", "prac_size_mean",
]


@dataclass
class SummaryRecord:
    method: str
    seed: int
    round: int
    sparsity_pct: float
    prac_size: Optional[int]
    train_size: int
    iterations: int
    cumulative_iterations: int
    early_stop_epoch: Optional[int]
    val_acc: float
    test_acc: float

    def row(self) -> list[str]:
        def f(x):
            if x is None:
                return ""
            if isinstance(x, float):
                return "" if math.isnan(x) else f"{x:.6f}"
            return str(x)
        return [f(getattr(self, c)) for c in SUMMARY_COLUMNS]


def write_summary(path, records) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in records:
        w.writerow(r.row())
    Path(path).write_text(buf.getvalue())


def read_summary(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class MethodRun:
    """Everything persisted for one (method, seed) run."""

    kind: str
    seed: int
    masks: list
    log: RunLog
    rewind: Optional[ParameterSet] = None
    prac_sets: list = field(default_factory=list)
    records: list = field(default_factory=list)
    wall_time: float = 0.0
    result: Optional[TicketResult] = None


# ---------------------------------------------------------------------------
# running


def _eval_rounds(cfg: ExperimentConfig, n_rounds: int) -> list[int]:
    mode = cfg["evaluate"]
    if mode == "none":
        return []
    if mode == "final":
        return [n_rounds]
    return list(range(1, n_rounds + 1))


def _records(kind: str, seed: int, log_: RunLog, tests: dict) -> list[SummaryRecord]:
    out, cum = [], 0
    for r in log_.rounds:
        cum += r.iterations
        out.append(SummaryRecord(kind, seed, r.round, 100.0 * r.sparsity, r.prac, r.train_size, r.iterations,
                                 cum, r.early_stop_epoch, r.val_acc, tests.get(r.round, float("nan"))))
        r.test_acc = tests.get(r.round, float("nan"))
    return out


def _evaluate(cfg: ExperimentConfig, net: NetworkSpec, task: Task, result: TicketResult,
              masks: list, seed: int, init_kind: str) -> dict:
    tcfg = cfg.ticket()
    tests = {}
    for k in _eval_rounds(cfg, len(masks)):
        m = masks[k - 1]
        if init_kind == "random":
            init = reinitialize(net, m, seed)
        elif init_kind == "rewind":
            init = rewind(result.theta0, result.rewind, m)
        else:
            init = result.theta0.masked(m)
        tests[k] = evaluate_ticket(tcfg, net, task, m, init, seed).test_acc
    return tests


def run_method(kind: str, cfg: ExperimentConfig, net: NetworkSpec, task: Task, seed: int,
               reference: Optional[MethodRun] = None) -> MethodRun:
    tcfg = cfg.ticket()
    init_kind = cfg["eval_init"]
    t0 = time.perf_counter()
    if kind in ("prac", "vanilla-lt", "random-subset", "entropy-subset", "snip-iterative"):
        if kind == "prac":
            res = find_ticket(tcfg, net, task, seed)
        elif kind == "vanilla-lt":
            res = vanilla_lt(tcfg, net, task, seed)
        else:
            if reference is None:
                raise InputError(f"{kind} needs a reference PrAC run")
            if kind == "snip-iterative":
                res = snip_iterative(tcfg, net, task, seed, reference.log)
            else:
                res = subset_lt(kind.split("-")[0], tcfg, net, task, seed, reference.log)
        tests = _evaluate(cfg, net, task, res, res.masks, seed, init_kind)
        run = MethodRun(kind, seed, res.masks, res.log, res.rewind, res.prac_sets, result=res)
    elif kind in ("random-prune", "random-ticket"):
        if reference is None or reference.result is None:
            raise InputError(f"{kind} needs a reference PrAC run")
        ref = reference.result
        if kind == "random-prune":
            masks = random_prune_sequence(ref.masks, seed, cfg["baseline.random_scope"])
            tests = _evaluate(cfg, net, task, ref, masks, seed, init_kind)
        else:
            masks = list(ref.masks)
            tests = _evaluate(cfg, net, task, ref, masks, seed, "random")
        log_ = RunLog([_copy_round(r) for r in ref.log.rounds])
        for r in log_.rounds:
            r.prac = r.cet = r.cep = None
        run = MethodRun(kind, seed, masks, log_, None, [], result=None)
    else:
        raise InputError(f"unknown method {kind!r}")
    run.records = _records(kind, seed, run.log, tests)
    run.wall_time = time.perf_counter() - t0
    return run


def _copy_round(r):
    return replace(r, epochs=[], forgetting=None, class_counts=None)


# ---------------------------------------------------------------------------
# persistence


def write_run(run_dir: Path, run: MethodRun, cfg: ExperimentConfig, extra: Optional[dict] = None) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    values = dict(cfg.values)
    values["kind"] = run.kind
    values["seed"] = str(run.seed)
    if extra:
        values.update(extra)
    (run_dir / "config.txt").write_text(format_config(values))
    for k, (rec, mask) in enumerate(zip(run.log.rounds, run.masks), 1):
        rd = run_dir / f"round_{k}"
        rd.mkdir(exist_ok=True)
        save_mask(rd / "mask.bin", mask)
        if k == 1 and run.rewind is not None:
            save_checkpoint(rd / "rewind.bin", run.rewind)
        prac = run.prac_sets[k - 1] if k - 1 < len(run.prac_sets) else None
        if prac is not None:
            save_prac(rd / "prac.txt", prac, k, rec.cet or 0, rec.cep or 0)
        with open(rd / "log.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "iterations", "lr", "loss", "train_acc", "val_acc", "mask_distance"])
            for e in rec.epochs:
                w.writerow([e.epoch, e.iterations, f"{e.lr:.8g}", f"{e.loss:.8f}", f"{e.train_acc:.6f}",
                            f"{e.val_acc:.6f}", f"{e.extra.get('mask_distance', float('nan')):.6f}"])
        if rec.forgetting is not None:
            with open(rd / "forgetting.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["forget_count", "samples"])
                for b, c in rec.forgetting.items():
                    w.writerow([b, c])
        if rec.class_counts is not None:
            with open(rd / "classes.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["class", "count"])
                for c, n in enumerate(rec.class_counts):
                    w.writerow([c, int(n)])
    write_summary(run_dir / "summary.csv", run.records)


def aggregate(records: list[SummaryRecord]) -> list[list[str]]:
    groups: dict = {}
    for r in records:
        groups.setdefault((r.method, r.round), []).append(r)
    rows = []
    for (method, rnd), rs in groups.items():
        accs = np.array([r.test_acc for r in rs], dtype=float)
        accs = accs[~np.isnan(accs)]
        mean = f"{accs.mean():.6f}" if accs.size else ""
        std = f"{accs.std(ddof=1) if accs.size > 1 else 0.0:.6f}" if accs.size else ""
        prac = [r.prac_size for r in rs if r.prac_size is not None]
        rows.append([method, str(rnd), f"{rs[0].sparsity_pct:.6f}", str(len(rs)), mean, std,
                     f"{np.mean([r.cumulative_iterations for r in rs]):.2f}",
                     f"{np.mean(prac):.2f}" if prac else ""])
    return rows


def run_experiment(config: ExperimentConfig, out: Optional[Path] = None, threads: int = 1,
                   seeds: Optional[list[int]] = None) -> Path:
    """Run every configured method for every seed and write the experiment directory.

    PrAC runs go first; budget-matched baselines then replay their per-round
    iteration counts and subset sizes.
    """
    task = config.task()
    net = config.network(task)
    seeds = seeds or config.seeds
    methods = config.methods
    needs_ref = [m for m in methods if m not in ("prac", "vanilla-lt")]
    if needs_ref and "prac" not in methods:
        raise InputError(f"methods {needs_ref} need 'prac' in the method list")
    exp_dir = Path(out or config["output"]) / config.name
    exp_dir.mkdir(parents=True, exist_ok=True)
    (exp_dir / "config.txt").write_text(config.to_text())

    def pool_map(fn, items):
        if threads <= 1:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))

    first = [(m, s) for m in methods if m in ("prac", "vanilla-lt") for s in seeds]
    runs = dict(zip(first, pool_map(lambda ms: run_method(ms[0], config, net, task, ms[1]), first)))
    second = [(m, s) for m in methods if m in needs_ref for s in seeds]
    runs.update(zip(second, pool_map(
        lambda ms: run_method(ms[0], config, net, task, ms[1], runs[("prac", ms[1])]), second)))

    records, timing = [], []
    for m in methods:
        for s in seeds:
            run = runs[(m, s)]
            write_run(exp_dir / f"{m}-s{s}", run, config)
            records += run.records
            timing.append((m, s, run.wall_time))
    write_summary(exp_dir / "summary.csv", records)
    with open(exp_dir / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        w.writerows(aggregate(records))
    with open(exp_dir / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "seed", "wall_time_seconds"])
        for m, s, t in timing:
            w.writerow([m, s, f"{t:.3f}"])
    return exp_dir


# ---------------------------------------------------------------------------
# transfer


def load_source_sets(source_run: Path) -> list[np.ndarray]:
    """PrAC index sets of a saved run, ordered by round."""
    sets = []
    k = 1
    while (source_run / f"round_{k}").is_dir():
        p = source_run / f"round_{k}" / "prac.txt"
        if not p.exists():
            break
        sets.append(load_prac(p)[0])
        k += 1
    return sets


def transfer_prac(source_sets: list[np.ndarray], target: NetworkSpec, config: ExperimentConfig,
                  task: Task, seed: int) -> TicketResult:
    """IMP on ``target`` whose data-slimming step replays the source's PrAC sets.

    Round ``k + 1`` trains on the source's round-``k`` set with the budget
    scaled by its size; no forgetting or disagreement statistics are computed.
    """
    tcfg = config.ticket()
    needed = rounds_to_exceed(tcfg.target_sparsity, tcfg.prune_ratio)
    if len(source_sets) < needed - 1:
        raise InputError(f"source provides {len(source_sets)} PrAC sets, target sparsity needs {needed - 1}")
    d0 = set(task.train_idx.tolist())
    for s in source_sets[:needed - 1]:
        if not set(s.tolist()) <= d0:
            raise InputError("transferred PrAC set is not a subset of the training split")

    def next_data(ctx: RoundContext):
        if ctx.round <= len(source_sets):
            return source_sets[ctx.round - 1], {}
        return task.train_idx, {}

    return imp_search(tcfg, target, task, seed, next_data=next_data, track_forgetting=False)


def run_transfer(source_run: Path, target_arch: str, out: Optional[Path] = None,
                 seed: Optional[int] = None, overrides: Optional[dict] = None) -> Path:
    """Transfer a saved PrAC run's sets to ``target_arch`` and persist the new run."""
    source_run = Path(source_run)
    src_values = dict(ExperimentConfig.load(source_run / "config.txt").values)
    src_seed = int(src_values.pop("seed", "0"))
    src_values.pop("kind", None)
    src_values.pop("source", None)
    src_values["arch"] = target_arch
    src_values.update(overrides or {})
    config = ExperimentConfig.from_dict(src_values)
    seed = src_seed if seed is None else seed
    task = config.task()
    net = config.network(task)
    t0 = time.perf_counter()
    res = transfer_prac(load_source_sets(source_run), net, config, task, seed)
    tests = _evaluate(config, net, task, res, res.masks, seed, config["eval_init"])
    kind = f"transfer-{target_arch}"
    run = MethodRun(kind, seed, res.masks, res.log, res.rewind, [], result=res)
    run.records = _records(kind, seed, res.log, tests)
    run.wall_time = time.perf_counter() - t0
    run_dir = Path(out) if out else source_run.parent / f"{kind}-s{seed}"
    write_run(run_dir, run, config, {"source": str(source_run)})
    return run_dir
