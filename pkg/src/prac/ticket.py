"""Lottery-ticket search with data slimming.

Each round trains the current subnetwork on the current training subset while
tracking forgetting statistics, prunes 20% of the remaining weights, and
replaces the training subset by the PrAC set: samples the subnetwork kept
forgetting plus samples whose prediction flipped when pruning. Later rounds
shrink their iteration budget in proportion to the PrAC set size and may stop
early once consecutive candidate masks stop moving.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .data import Task, augment as augment_batch
from .errors import DegenerateRunError, InputError
from .nn import (
    Hooks,
    LrSchedule,
    NetworkSpec,
    ParameterSet,
    TrainConfig,
    accuracy,
    init_params,
    iterations_per_epoch,
    make_schedule,
    predict,
    train_epochs,
)
from .pruning import PruneConfig, SparseMask, candidate_mask, global_magnitude_prune, hamming, sparsity
from .rng import EVAL_STREAM, INIT_STREAM, RANDOM_TICKET_STREAM, RngStream
from .stats import (
    ForgettingLedger,
    PrACSet,
    SelectionConfig,
    build_prac,
    class_histogram,
    forgetting_histogram,
    overlap_rate,
    select_cep,
    select_cet,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EarlyStopConfig:
    enabled: bool = True
    threshold: float = 0.07
    patience: int = 1
    mode: str = "consecutive"  # or "fifo": max distance over the last `window` masks
    window: int = 5


@dataclass(frozen=True)
class TicketRunConfig:
    target_sparsity: float
    epochs: int
    prune_ratio: float = 0.2
    batch_size: int = 128
    rewind_epoch: int = 3
    selection: SelectionConfig = SelectionConfig()
    early_stop: EarlyStopConfig = EarlyStopConfig()
    dynamic_iterations: bool = True
    data_slimming: bool = True
    lr_variant: str = "standard"
    base_lr: Optional[float] = None
    milestones: Optional[tuple] = None   # in epochs; default 91/182 and 136/182 of `epochs`
    warmup_epochs: Optional[int] = None
    momentum: float = 0.9
    weight_decay: float = 1e-4
    prune_scope: str = "global"
    correctness: str = "presentation"    # or "sweep": full un-augmented pass over D after each epoch

    def __post_init__(self):
        if not 0.0 < self.prune_ratio < 1.0:
            raise InputError("prune_ratio must lie in (0, 1)")
        if not 0.0 < self.target_sparsity < 1.0:
            raise InputError("target_sparsity must lie in (0, 1)")
        # 0 selects rewinding to the initial weights
        if not 0 <= self.rewind_epoch < self.epochs:
            raise InputError("rewind_epoch must lie in [0, epochs)")
        if self.correctness not in ("presentation", "sweep"):
            raise InputError(f"unknown correctness mode {self.correctness!r}")
        if self.early_stop.mode not in ("consecutive", "fifo"):
            raise InputError(f"unknown early-stop mode {self.early_stop.mode!r}")

    @property
    def prune(self) -> PruneConfig:
        return PruneConfig(self.prune_ratio, self.prune_scope)

    def base_iterations(self, d0_size: int) -> int:
        """N0: iterations of one full-data round."""
        return self.epochs * iterations_per_epoch(d0_size, self.batch_size)

    def schedule(self, d0_size: int) -> LrSchedule:
        return make_schedule(self.lr_variant, self.epochs, iterations_per_epoch(d0_size, self.batch_size),
                             self.base_lr, self.milestones, self.warmup_epochs)


def vanilla_config(cfg: TicketRunConfig) -> TicketRunConfig:
    """Same knobs with data slimming, iteration scaling and early stopping turned off."""
    return replace(cfg, data_slimming=False, dynamic_iterations=False,
                   early_stop=replace(cfg.early_stop, enabled=False))


# ---------------------------------------------------------------------------
# budget and schedule scaling


def _as_fraction(ratio) -> Fraction:
    if isinstance(ratio, (Fraction, int)):
        return Fraction(ratio)
    return Fraction(repr(float(ratio)))


def dynamic_iterations(prac_size: int, d0_size: int, base_iterations: int) -> int:
    """``floor(prac_size / d0_size * base_iterations)``, at least 1."""
    if not 0 < prac_size <= d0_size or base_iterations <= 0:
        raise InputError("need 0 < prac_size <= d0_size and base_iterations > 0")
    return max(1, (prac_size * base_iterations) // d0_size)


def rescale_schedule(schedule: LrSchedule, ratio) -> LrSchedule:
    """Scale total length, milestones and warmup by ``ratio`` (floored, at least 1)."""
    r = _as_fraction(ratio)
    if not 0 < r <= 1:
        raise InputError("ratio must lie in (0, 1]")
    total = max(1, math.floor(schedule.total_iterations * r))
    warmup = max(1, math.floor(schedule.warmup_iterations * r)) if schedule.warmup_iterations else 0
    milestones = []
    floor_at = warmup + 1 if warmup else 1
    for m in schedule.milestones:
        v = max(floor_at, math.floor(m * r))
        if milestones and v <= milestones[-1]:
            v = milestones[-1] + 1
        milestones.append(v)
    milestones = [m for m in milestones if m < total]
    if warmup >= total:
        warmup = 0
    return LrSchedule(schedule.base_lr, total, tuple(milestones), schedule.decay, warmup)


# ---------------------------------------------------------------------------
# early stopping


@dataclass
class PatienceState:
    hits: int = 0


def early_stop_check(prev: SparseMask, cur: SparseMask, threshold: float, patience: int = 1,
                     state: Optional[PatienceState] = None) -> bool:
    """True once the normalized Hamming distance has been below ``threshold``
    for ``patience`` consecutive comparisons."""
    state = state if state is not None else PatienceState()
    return _patience_step(hamming(prev, cur)[1], threshold, patience, state)


def _patience_step(distance: float, threshold: float, patience: int, state: PatienceState) -> bool:
    state.hits = state.hits + 1 if distance < threshold else 0
    return state.hits >= patience


class EarlyStopMonitor:
    """Tracks candidate masks at epoch ends and decides when to stop."""

    def __init__(self, cfg: EarlyStopConfig, min_epoch: int = 0):
        self.cfg = cfg
        self.min_epoch = min_epoch
        self.state = PatienceState()
        self.masks: list[SparseMask] = []
        self.distances: list[float] = []

    def update_distance(self, distance: float, epoch: Optional[int] = None) -> bool:
        self.distances.append(distance)
        stop = _patience_step(distance, self.cfg.threshold, self.cfg.patience, self.state)
        return stop and (epoch is None or epoch >= self.min_epoch)

    def update(self, mask: SparseMask, epoch: Optional[int] = None) -> bool:
        keep = max(2, self.cfg.window) if self.cfg.mode == "fifo" else 2
        self.masks = (self.masks + [mask])[-keep:]
        if len(self.masks) < 2:
            return False
        if self.cfg.mode == "fifo":
            if len(self.masks) < keep:
                self.distances.append(hamming(self.masks[-2], mask)[1])
                return False
            d = max(hamming(m, mask)[1] for m in self.masks[:-1])
        else:
            d = hamming(self.masks[-2], mask)[1]
        return self.update_distance(d, epoch)


# ---------------------------------------------------------------------------
# rewinding and initialization


def rewind(params: ParameterSet, snapshot: ParameterSet, mask: SparseMask) -> ParameterSet:
    """Surviving weights take their snapshot values, pruned weights become 0."""
    out = {}
    for n in params:
        s = snapshot[n]
        out[n] = np.where(mask[n], s, 0.0).astype(s.dtype) if n in mask else s.copy()
    return ParameterSet(out, params.prunable)


def reinitialize(net: NetworkSpec, mask: SparseMask, seed: int) -> ParameterSet:
    """Fresh weights from the same initializer family as the original ones, masked."""
    return init_params(net, RngStream(seed, RANDOM_TICKET_STREAM)).masked(mask)


# ---------------------------------------------------------------------------
# run records


@dataclass
class RoundRecord:
    round: int
    sparsity: float
    train_size: int
    budget: int
    budget_formula: int
    iterations: int
    early_stop_epoch: Optional[int]
    val_acc: float
    cet: Optional[int] = None
    cep: Optional[int] = None
    prac: Optional[int] = None
    overlap_rate: float = float("nan")
    test_acc: float = float("nan")
    epochs: list = field(default_factory=list, repr=False)
    forgetting: Optional[dict] = field(default=None, repr=False)
    class_counts: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class RunLog:
    rounds: list = field(default_factory=list)

    @property
    def cumulative_iterations(self) -> int:
        return sum(r.iterations for r in self.rounds)

    def cumulative(self) -> list[int]:
        return list(np.cumsum([r.iterations for r in self.rounds]).astype(int))


@dataclass
class TicketResult:
    mask: SparseMask
    prac: Optional[PrACSet]
    log: RunLog
    masks: list            # mask after each round's pruning
    train_sets: list       # index set trained on in each round
    prac_sets: list        # PrACSet built at the end of each round (None without slimming)
    cet_sets: list
    cep_sets: list
    theta0: ParameterSet
    rewind: ParameterSet
    d0: np.ndarray


@dataclass
class RoundContext:
    """What a data-selection strategy can see after a round's pruning step."""

    round: int
    params: ParameterSet        # trained weights of the round
    mask: SparseMask            # mask the round was trained under
    new_mask: SparseMask        # mask after pruning
    train_set: np.ndarray
    ledger: Optional[ForgettingLedger]
    task: Task
    net: NetworkSpec
    seed: int


# ---------------------------------------------------------------------------
# the search loop


def _train_round(net, task: Task, cfg: TicketRunConfig, round_index: int, start: ParameterSet,
                 mask: SparseMask, train_set: np.ndarray, budget: int, schedule: LrSchedule,
                 seed: int, ledger: Optional[ForgettingLedger], early_stop: bool,
                 observer: Optional[Callable]):
    x, y = task.train.features, task.train.labels
    monitor = EarlyStopMonitor(cfg.early_stop, min_epoch=cfg.rewind_epoch if round_index == 1 else 0)
    stop_epoch = [None]

    def on_batch(idx, ok):
        if ledger is not None and cfg.correctness == "presentation":
            ledger.record(idx, ok)

    def on_epoch_end(epoch, params, rec):
        if ledger is not None and cfg.correctness == "sweep":
            ledger.record(train_set, predict(net, params, mask, x[train_set]) == y[train_set])
        stop = False
        if early_stop:
            cand = candidate_mask(params, mask, cfg.prune)
            stop = monitor.update(cand, epoch)
            rec.extra["mask_distance"] = monitor.distances[-1] if monitor.distances else float("nan")
        if observer is not None:
            observer("epoch_end", round=round_index, epoch=epoch, params=params, mask=mask)
        if stop:
            stop_epoch[0] = epoch
        return stop

    ipe = iterations_per_epoch(train_set.size, cfg.batch_size)
    tcfg = TrainConfig(
        epochs=-(-budget // ipe), schedule=schedule, batch_size=cfg.batch_size,
        momentum=cfg.momentum, weight_decay=cfg.weight_decay, max_iterations=budget,
        rewind_epoch=cfg.rewind_epoch if round_index == 1 else None,
    )
    aug = None
    if task.augment is not None:
        acfg = task.augment
        aug = lambda xb, rng: augment_batch(xb, acfg, rng)  # noqa: E731
    result = train_epochs(net, start, mask, x, y, train_set, tcfg, RngStream(seed, round_index),
                          Hooks(on_batch, on_epoch_end), val=task.val_data(), augment=aug)
    return result, (stop_epoch[0] if result.stopped_early else None)


def imp_search(cfg: TicketRunConfig, net: NetworkSpec, task: Task, seed: int, *,
               next_data: Optional[Callable[[RoundContext], tuple]] = None,
               prune_fn: Optional[Callable[[RoundContext], SparseMask]] = None,
               budgets: Optional[Sequence[int]] = None,
               track_forgetting: Optional[bool] = None,
               observer: Optional[Callable] = None,
               theta0: Optional[ParameterSet] = None) -> TicketResult:
    """Generic iterative magnitude pruning loop with rewinding.

    ``next_data(ctx)`` returns ``(next_train_set, info)`` where ``info`` may hold
    ``cet``, ``cep`` and ``prac`` (a :class:`PrACSet`). Without it the training
    set stays fixed at D0. ``budgets`` pins each round's iteration count (and
    disables early stopping); otherwise the budget follows ``cfg``.
    ``prune_fn`` replaces magnitude pruning.
    """
    d0 = np.asarray(task.train_idx, dtype=np.int64)
    if d0.size == 0:
        raise InputError("empty training set")
    n0 = cfg.base_iterations(d0.size)
    base_schedule = cfg.schedule(d0.size)
    theta0 = theta0 if theta0 is not None else init_params(net, RngStream(seed, INIT_STREAM))
    mask = SparseMask.ones(theta0)
    train_set = d0
    snapshot: Optional[ParameterSet] = None
    track = next_data is not None if track_forgetting is None else track_forgetting
    res = TicketResult(mask, None, RunLog(), [], [], [], [], [], theta0, None, d0)

    round_index = 0
    while sparsity(mask) <= cfg.target_sparsity:
        round_index += 1
        start = theta0.masked(mask) if snapshot is None else rewind(theta0, snapshot, mask)
        if observer is not None:
            observer("round_start", round=round_index, params=start, mask=mask, snapshot=snapshot)

        ratio = Fraction(train_set.size, d0.size)
        formula = dynamic_iterations(train_set.size, d0.size, n0)
        if budgets is not None:
            if round_index > len(budgets):
                raise InputError("reference budgets do not cover every round")
            budget = int(budgets[round_index - 1])
            schedule = rescale_schedule(base_schedule, ratio) if cfg.dynamic_iterations else base_schedule
            early = False
        else:
            budget = formula if cfg.dynamic_iterations else n0
            schedule = rescale_schedule(base_schedule, ratio) if cfg.dynamic_iterations else base_schedule
            early = cfg.early_stop.enabled
            floor_budget = iterations_per_epoch(train_set.size, cfg.batch_size)
            if budget < floor_budget:
                log.warning("round %d budget %d below one epoch; clamped to %d", round_index, budget, floor_budget)
                budget = floor_budget

        ledger = ForgettingLedger(len(task.train)) if track else None
        tr, stop_epoch = _train_round(net, task, cfg, round_index, start, mask, train_set, budget,
                                      schedule, seed, ledger, early, observer)
        if round_index == 1:
            snapshot = tr.snapshot
            if snapshot is None:
                raise DegenerateRunError("first round ended before the rewind epoch")
            res.rewind = snapshot

        ctx = RoundContext(round_index, tr.params, mask, None, train_set, ledger, task, net, seed)
        new_mask = prune_fn(ctx) if prune_fn is not None else global_magnitude_prune(tr.params, mask, cfg.prune)
        ctx.new_mask = new_mask
        if observer is not None:
            observer("round_end", round=round_index, params=tr.params, mask=mask, new_mask=new_mask)

        rec = RoundRecord(
            round=round_index, sparsity=sparsity(new_mask), train_size=int(train_set.size),
            budget=budget, budget_formula=formula, iterations=tr.iterations,
            early_stop_epoch=stop_epoch, val_acc=tr.records[-1].val_acc if tr.records else float("nan"),
            epochs=tr.records,
        )
        if ledger is not None:
            rec.forgetting = forgetting_histogram_within(ledger, train_set)

        info: dict = {}
        if next_data is not None:
            nxt, info = next_data(ctx)
            nxt = np.asarray(nxt, dtype=np.int64)
            if nxt.size == 0:
                raise DegenerateRunError(
                    f"round {round_index}: selected training set is empty "
                    f"(|CET|={np.size(info.get('cet', []))}, |CEP|={np.size(info.get('cep', []))})")
        else:
            nxt = d0
        prac = info.get("prac")
        if "cet" in info:
            rec.cet = int(np.size(info["cet"]))
        if "cep" in info:
            rec.cep = int(np.size(info["cep"]))
            if rec.cep:
                rec.overlap_rate = overlap_rate(info["cep"], info.get("cet", np.zeros(0, np.int64)))
        if prac is not None:
            rec.prac = len(prac)
            rec.class_counts = class_histogram(prac, task.train.labels, task.num_classes)

        res.log.rounds.append(rec)
        res.masks.append(new_mask)
        res.train_sets.append(train_set)
        res.prac_sets.append(prac)
        res.cet_sets.append(info.get("cet"))
        res.cep_sets.append(info.get("cep"))
        mask, train_set = new_mask, nxt

    res.mask = mask
    res.prac = res.prac_sets[-1] if res.prac_sets else None
    return res


def forgetting_histogram_within(ledger: ForgettingLedger, indices: np.ndarray) -> dict:
    sub = ForgettingLedger(0)
    sub.last_correct = ledger.last_correct[indices]
    sub.ever_correct = ledger.ever_correct[indices]
    sub.forget_count = ledger.forget_count[indices]
    sub.presentations = ledger.presentations[indices]
    return forgetting_histogram(sub)


def prac_selection(cfg: TicketRunConfig) -> Callable[[RoundContext], tuple]:
    """Data-slimming step: CET from the round's ledger, CEP over all of D0."""

    def select(ctx: RoundContext):
        cet = select_cet(ctx.ledger, cfg.selection, within=ctx.train_set)
        cep = select_cep(ctx.net, ctx.params, ctx.mask, ctx.new_mask, ctx.task.train.features, ctx.task.train_idx)
        prac = build_prac(cet, cep)
        return prac.indices, {"cet": cet, "cep": cep, "prac": prac}

    return select


def find_ticket(cfg: TicketRunConfig, net: NetworkSpec, task: Task, seed: int,
                observer: Optional[Callable] = None) -> TicketResult:
    """Alternate training on the PrAC set and magnitude pruning until sparsity exceeds the target.

    Round 1 trains from the initial weights on the full training set and keeps
    the rewind snapshot; every later round restarts from that snapshot under
    the current mask. With ``cfg.data_slimming`` off the training set stays
    at D0 and no statistics are gathered.
    """
    if not cfg.data_slimming:
        return imp_search(cfg, net, task, seed, observer=observer)
    return imp_search(cfg, net, task, seed, next_data=prac_selection(cfg), observer=observer)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalResult:
    test_acc: float
    best_epoch: int
    best_val_acc: float
    curve: list  # (epoch, val_acc, test_acc)


def evaluate_ticket(cfg: TicketRunConfig, net: NetworkSpec, task: Task, mask: Optional[SparseMask],
                    init: ParameterSet, seed: int, train_set: Optional[np.ndarray] = None) -> EvalResult:
    """Retrain ``f(mask * init)`` on the full training set with the full schedule.

    Reports the test accuracy at the epoch of best validation accuracy
    (earliest on ties; the last epoch when there is no validation split).
    """
    d0 = task.train_idx
    train_set = d0 if train_set is None else np.asarray(train_set, dtype=np.int64)
    x, y = task.train.features, task.train.labels
    xt, yt = task.test_data()
    curve = []

    def on_epoch_end(epoch, params, rec):
        curve.append((epoch, rec.val_acc, accuracy(net, params, mask, xt, yt)))
        return False

    tcfg = TrainConfig(cfg.epochs, cfg.schedule(d0.size), cfg.batch_size, cfg.momentum, cfg.weight_decay)
    aug = None
    if task.augment is not None:
        acfg = task.augment
        aug = lambda xb, rng: augment_batch(xb, acfg, rng)  # noqa: E731
    train_epochs(net, init, mask, x, y, train_set, tcfg, RngStream(seed, EVAL_STREAM),
                 Hooks(on_epoch_end=on_epoch_end), val=task.val_data(), augment=aug)
    vals = [c[1] for c in curve]
    if len(task.val_idx) and not all(np.isnan(vals)):
        best = int(np.nanargmax(vals))
    else:
        best = len(curve) - 1
    return EvalResult(curve[best][2], curve[best][0], curve[best][1], curve)


def ticket_init(result: TicketResult, kind: str, net: NetworkSpec, mask: SparseMask, seed: int) -> ParameterSet:
    """Starting weights for evaluating ``mask``: ``rewind`` snapshot, ``theta0``, or ``random`` re-init."""
    if kind == "rewind":
        return rewind(result.theta0, result.rewind, mask)
    if kind == "theta0":
        return result.theta0.masked(mask)
    if kind == "random":
        return reinitialize(net, mask, seed)
    raise InputError(f"unknown init kind {kind!r}")
