"""Comparison methods for PrAC tickets.

Budget-matched baselines (random subset, entropy subset, iterative SNIP)
replay the per-round iteration counts and training-set sizes of a reference
PrAC run, so that only the choice of data or pruning criterion differs.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import InputError
from .nn import NetworkSpec, ParameterSet, forward, loss_and_grads
from .pruning import SparseMask, prune_by_scores
from .rng import RANDOM_MASK_STREAM, SUBSET_STREAM, RngStream
from .ticket import RoundContext, RunLog, TicketResult, TicketRunConfig, find_ticket, imp_search, reinitialize, vanilla_config
from .data import Task

BASELINE_KINDS = ("vanilla-lt", "random-prune", "random-ticket", "random-subset", "entropy-subset", "snip-iterative")


def vanilla_lt(cfg: TicketRunConfig, net: NetworkSpec, task: Task, seed: int, observer=None) -> TicketResult:
    """Plain iterative magnitude pruning on the full training set every round."""
    return find_ticket(vanilla_config(cfg), net, task, seed, observer=observer)


def random_prune_mask(reference: SparseMask, seed: int, scope: str = "layer",
                      within: Optional[SparseMask] = None, stream: int = 0) -> SparseMask:
    """Uniformly random mask keeping as many weights as ``reference`` (per tensor, or overall).

    Kept positions are drawn from ``within`` when given, so successive random
    masks stay nested.
    """
    rng = RngStream(seed, RANDOM_MASK_STREAM + stream)
    pool = within if within is not None else SparseMask({n: np.ones(m.shape, dtype=bool) for n, m in reference.items()})
    if scope == "layer":
        out = {}
        for name, m in reference.items():
            alive = np.flatnonzero(pool[name])
            keep = int(m.sum())
            if keep > alive.size:
                raise InputError(f"{name}: cannot keep {keep} of {alive.size} positions")
            flat = np.zeros(m.size, dtype=bool)
            flat[alive[rng.choice(alive.size, size=keep, replace=False)]] = True
            out[name] = flat.reshape(m.shape)
        return SparseMask(out)
    if scope == "global":
        alive = np.flatnonzero(pool.flat())
        keep = reference.count()
        if keep > alive.size:
            raise InputError(f"cannot keep {keep} of {alive.size} positions")
        flat = np.zeros(reference.total, dtype=bool)
        flat[alive[rng.choice(alive.size, size=keep, replace=False)]] = True
        return SparseMask.from_flat(flat, reference)
    raise InputError(f"unknown scope {scope!r}")


def random_prune_sequence(references: list, seed: int, scope: str = "layer") -> list:
    """Nested random masks matching each reference mask's kept counts, round by round."""
    out, prev = [], None
    for k, ref in enumerate(references, 1):
        prev = random_prune_mask(ref, seed, scope, within=prev, stream=k)
        out.append(prev)
    return out


def random_ticket(net: NetworkSpec, mask: SparseMask, seed: int) -> ParameterSet:
    return reinitialize(net, mask, seed)


def entropy(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -(np.exp(logp) * logp).sum(axis=1)


def subset_sampler(kind: str, d0: np.ndarray, size: int, rng: Optional[RngStream] = None,
                   logits: Optional[np.ndarray] = None) -> np.ndarray:
    """Sorted subset of ``d0``: uniform without replacement, or the ``size``
    highest-entropy samples (``logits`` aligned with ``d0``; ties to lower index)."""
    d0 = np.asarray(d0, dtype=np.int64)
    if not 0 < size <= d0.size:
        raise InputError(f"subset size {size} outside (0, {d0.size}]")
    if kind == "random":
        if rng is None:
            raise InputError("random subsets need an RngStream")
        return np.sort(d0[rng.choice(d0.size, size=size, replace=False)])
    if kind == "entropy":
        if logits is None:
            raise InputError("entropy subsets need model logits")
        h = entropy(logits)
        order = np.lexsort((d0, -h))
        return np.sort(d0[order[:size]])
    raise InputError(f"unknown sampler {kind!r}")


def snip_scores(net: NetworkSpec, params: ParameterSet, mask: Optional[SparseMask],
                x: np.ndarray, y: np.ndarray) -> dict:
    """Connection sensitivity ``|dL/dw * w|`` of every prunable weight on one batch."""
    _, grads, _ = loss_and_grads(net, params, mask, x, y)
    return {n: saliency(grads[n], params[n]) for n in params.prunable}


def saliency(grad: np.ndarray, weight: np.ndarray) -> np.ndarray:
    return np.abs(grad * weight)


def _matched_sizes(reference: RunLog) -> list[int]:
    return [r.train_size for r in reference.rounds]


def subset_lt(kind: str, cfg: TicketRunConfig, net: NetworkSpec, task: Task, seed: int,
              reference: RunLog) -> TicketResult:
    """IMP where each round trains on a random or max-entropy subset of the
    reference round's size, for the reference round's iteration count."""
    sizes = _matched_sizes(reference)
    d0 = task.train_idx

    def next_data(ctx: RoundContext):
        size = sizes[ctx.round] if ctx.round < len(sizes) else d0.size
        if kind == "random":
            idx = subset_sampler("random", d0, size, RngStream(seed, SUBSET_STREAM + ctx.round))
        else:
            logits = np.concatenate([
                forward(net, ctx.params, ctx.mask, task.train.features[d0[i:i + 1024]])
                for i in range(0, d0.size, 1024)
            ])
            idx = subset_sampler("entropy", d0, size, logits=logits)
        return idx, {}

    return imp_search(cfg, net, task, seed, next_data=next_data,
                      budgets=[r.iterations for r in reference.rounds], track_forgetting=False)


def snip_iterative(cfg: TicketRunConfig, net: NetworkSpec, task: Task, seed: int,
                   reference: RunLog) -> TicketResult:
    """Iterative SNIP: each round prunes the lowest-saliency remaining weights,
    scored on one minibatch at the round's trained weights, with budgets and
    random subsets matched to the reference run."""
    sizes = _matched_sizes(reference)
    d0 = task.train_idx

    def next_data(ctx: RoundContext):
        size = sizes[ctx.round] if ctx.round < len(sizes) else d0.size
        return subset_sampler("random", d0, size, RngStream(seed, SUBSET_STREAM + ctx.round)), {}

    def prune_fn(ctx: RoundContext) -> SparseMask:
        rng = RngStream(seed, SUBSET_STREAM + 500 + ctx.round)
        batch = ctx.train_set[rng.permutation(ctx.train_set.size)[:cfg.batch_size]]
        scores = snip_scores(net, ctx.params, ctx.mask, task.train.features[batch], task.train.labels[batch])
        return prune_by_scores(scores, ctx.mask, cfg.prune)

    return imp_search(cfg, net, task, seed, next_data=next_data, prune_fn=prune_fn,
                      budgets=[r.iterations for r in reference.rounds], track_forgetting=False)
