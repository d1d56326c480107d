"""A small deterministic numpy network engine.

Networks are described by a :class:`NetworkSpec` (a tuple of layer descriptors)
and their weights live in a separate :class:`ParameterSet`, so one architecture can
be evaluated under different weights and masks. Gradients are hand-written
reverse-mode passes for each layer type. A mask, when given, multiplies every
prunable weight elementwise before use.
"""

from __future__ import annotations

import math
import struct
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError, InputError, NumericError, ShapeError
from .rng import RngStream

# ---------------------------------------------------------------------------
# layers


@dataclass(frozen=True)
class Linear:
    in_features: int
    out_features: int
    bias: bool = True


@dataclass(frozen=True)
class Conv2d:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    bias: bool = True


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool2d:
    kernel: int
    stride: Optional[int] = None

    @property
    def step(self) -> int:
        return self.stride or self.kernel


@dataclass(frozen=True)
class Flatten:
    pass


Layer = Linear | Conv2d | ReLU | MaxPool2d | Flatten


def _out_shape(layer: Layer, shape: tuple[int, ...]) -> tuple[int, ...]:
    if isinstance(layer, Linear):
        if shape != (layer.in_features,):
            raise ShapeError(f"{layer} expects ({layer.in_features},), got {shape}")
        return (layer.out_features,)
    if isinstance(layer, Conv2d):
        if len(shape) != 3 or shape[0] != layer.in_channels:
            raise ShapeError(f"{layer} expects ({layer.in_channels}, H, W), got {shape}")
        _, h, w = shape
        ho = (h + 2 * layer.padding - layer.kernel) // layer.stride + 1
        wo = (w + 2 * layer.padding - layer.kernel) // layer.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"{layer} produces empty output from {shape}")
        return (layer.out_channels, ho, wo)
    if isinstance(layer, MaxPool2d):
        if len(shape) != 3:
            raise ShapeError(f"{layer} expects (C, H, W), got {shape}")
        c, h, w = shape
        ho = (h - layer.kernel) // layer.step + 1
        wo = (w - layer.kernel) // layer.step + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"{layer} produces empty output from {shape}")
        return (c, ho, wo)
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, ReLU):
        return shape
    raise ShapeError(f"unknown layer {layer!r}")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    num_classes: int
    input_shape: tuple
    name: str = "net"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        if self.num_classes < 1:
            raise ShapeError("num_classes must be positive")
        shape = self.input_shape
        for layer in self.layers:
            shape = _out_shape(layer, shape)
        if shape != (self.num_classes,):
            raise ShapeError(f"network output {shape} != ({self.num_classes},)")

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Linear):
                shapes[f"{i}.weight"] = (layer.out_features, layer.in_features)
                if layer.bias:
                    shapes[f"{i}.bias"] = (layer.out_features,)
            elif isinstance(layer, Conv2d):
                shapes[f"{i}.weight"] = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
                if layer.bias:
                    shapes[f"{i}.bias"] = (layer.out_channels,)
        return shapes


def mlp(input_dim: int, num_classes: int, hidden: Sequence[int] = (300, 100),
        input_shape: Optional[tuple] = None) -> NetworkSpec:
    """Fully connected ``input-300-100-classes`` network (image inputs are flattened)."""
    layers: list = []
    if input_shape is not None and len(input_shape) > 1:
        layers.append(Flatten())
    width = input_dim
    for h in hidden:
        layers += [Linear(width, h), ReLU()]
        width = h
    layers.append(Linear(width, num_classes))
    return NetworkSpec(tuple(layers), num_classes, input_shape or (input_dim,), name="mlp")


def lenet(input_shape: tuple, num_classes: int, channels=(6, 16), hidden: int = 120) -> NetworkSpec:
    """LeNet-style CNN: two conv/relu/pool blocks followed by two fully connected layers."""
    c, h, w = input_shape
    layers = [
        Conv2d(c, channels[0], 3, padding=1), ReLU(), MaxPool2d(2),
        Conv2d(channels[0], channels[1], 3, padding=1), ReLU(), MaxPool2d(2),
        Flatten(),
    ]
    flat = channels[1] * (h // 4) * (w // 4)
    layers += [Linear(flat, hidden), ReLU(), Linear(hidden, num_classes)]
    return NetworkSpec(tuple(layers), num_classes, input_shape, name="cnn")


ARCHITECTURES = {"mlp", "cnn"}


def build_network(arch: str, input_shape: tuple, num_classes: int) -> NetworkSpec:
    if arch == "mlp":
        return mlp(int(np.prod(input_shape)), num_classes, input_shape=tuple(input_shape))
    if arch == "cnn":
        if len(input_shape) != 3:
            raise InputError("cnn needs image inputs (C, H, W)")
        return lenet(tuple(input_shape), num_classes)
    raise InputError(f"unknown architecture {arch!r}; expected one of {sorted(ARCHITECTURES)}")


# ---------------------------------------------------------------------------
# parameters


class ParameterSet(Mapping):
    """Ordered name -> array map. Weights are prunable, biases are not."""

    def __init__(self, tensors: Mapping[str, np.ndarray], prunable: Optional[Sequence[str]] = None):
        self._t = dict(tensors)
        if prunable is None:
            prunable = [n for n in self._t if n.endswith(".weight")]
        self._prunable = tuple(n for n in self._t if n in set(prunable))

    def __getitem__(self, name):
        return self._t[name]

    def __setitem__(self, name, value):
        if name not in self._t:
            raise KeyError(name)
        self._t[name] = value

    def __iter__(self) -> Iterator[str]:
        return iter(self._t)

    def __len__(self):
        return len(self._t)

    @property
    def prunable(self) -> tuple[str, ...]:
        return self._prunable

    def is_prunable(self, name: str) -> bool:
        return name in self._prunable

    def copy(self) -> "ParameterSet":
        return ParameterSet({n: v.copy() for n, v in self._t.items()}, self._prunable)

    def zeros_like(self) -> "ParameterSet":
        return ParameterSet({n: np.zeros_like(v) for n, v in self._t.items()}, self._prunable)

    def num_prunable(self) -> int:
        return sum(self._t[n].size for n in self._prunable)

    def equal(self, other: "ParameterSet") -> bool:
        """Bitwise equality of names, shapes and values."""
        if list(self) != list(other):
            return False
        return all(
            self[n].shape == other[n].shape and self[n].dtype == other[n].dtype
            and self[n].tobytes() == other[n].tobytes()
            for n in self
        )

    def masked(self, mask: Optional[Mapping]) -> "ParameterSet":
        out = self.copy()
        if mask is not None:
            for n in self._prunable:
                out._t[n] *= mask[n]
        return out

    def __repr__(self):
        body = ", ".join(f"{n}{list(v.shape)}" for n, v in self._t.items())
        return f"ParameterSet({body})"


def init_params(net: NetworkSpec, rng: RngStream, dtype=np.float64) -> ParameterSet:
    """He-style fan-in uniform weights, U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero biases."""
    tensors = {}
    for name, shape in net.param_shapes().items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            bound = math.sqrt(6.0 / fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        else:
            tensors[name] = np.zeros(shape, dtype=dtype)
    return ParameterSet(tensors)


def _check_aligned(params: ParameterSet, mask: Optional[Mapping]):
    if mask is None:
        return
    for n in params.prunable:
        if n not in mask or np.shape(mask[n]) != params[n].shape:
            raise ShapeError(f"mask entry {n!r} not aligned with parameters")


def _effective(params: ParameterSet, mask: Optional[Mapping]) -> dict[str, np.ndarray]:
    if mask is None:
        return dict(params.items())
    return {n: (v * mask[n] if params.is_prunable(n) else v) for n, v in params.items()}


def _check_finite(what: str, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# forward / backward


def _conv_forward(x, w, b, stride, pad):
    n, c, _, _ = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    out = cols @ w.reshape(o, -1).T
    if b is not None:
        out += b
    return out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2), (cols, xp.shape)


def _conv_backward(dy, w, cache, stride, pad, in_shape):
    cols, padded_shape = cache
    n, o, ho, wo = dy.shape
    _, c, k, _ = w.shape
    dyc = dy.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = (dyc.T @ cols).reshape(w.shape)
    db = dyc.sum(axis=0)
    dcols = (dyc @ w.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
    dxp = np.zeros(padded_shape, dtype=dy.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[..., i, j].transpose(0, 3, 1, 2)
    h, wd = in_shape[2], in_shape[3]
    return dxp[:, :, pad:pad + h, pad:pad + wd], dw, db


def _pool_forward(x, k, s):
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    n, c, ho, wo = win.shape[:4]
    flat = win.reshape(n, c, ho, wo, k * k)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return out, arg


def _pool_backward(dy, arg, k, s, in_shape):
    dx = np.zeros(in_shape, dtype=dy.dtype)
    _, _, ho, wo = dy.shape
    for p in range(k * k):
        i, j = divmod(p, k)
        dx[:, :, i:i + s * ho:s, j:j + s * wo:s] += dy * (arg == p)
    return dx


def _forward(net: NetworkSpec, weights: dict, x: np.ndarray, keep: bool):
    caches = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Linear):
            w, b = weights[f"{i}.weight"], weights.get(f"{i}.bias")
            cache = x
            x = x @ w.T
            if b is not None:
                x = x + b
        elif isinstance(layer, Conv2d):
            w, b = weights[f"{i}.weight"], weights.get(f"{i}.bias")
            in_shape = x.shape
            x, cache = _conv_forward(x, w, b, layer.stride, layer.padding)
            cache = (cache, in_shape)
        elif isinstance(layer, ReLU):
            cache = x > 0
            x = x * cache
        elif isinstance(layer, MaxPool2d):
            in_shape = x.shape
            x, arg = _pool_forward(x, layer.kernel, layer.step)
            cache = (arg, in_shape)
        elif isinstance(layer, Flatten):
            cache = x.shape
            x = x.reshape(x.shape[0], -1)
        if keep:
            caches.append(cache)
    return x, caches


def _check_batch(net: NetworkSpec, batch: np.ndarray):
    if batch.ndim != len(net.input_shape) + 1 or tuple(batch.shape[1:]) != net.input_shape:
        raise ShapeError(f"batch shape {batch.shape} incompatible with input {net.input_shape}")


def forward(net: NetworkSpec, params: ParameterSet, mask: Optional[Mapping], batch: np.ndarray) -> np.ndarray:
    """Logits ``f(mask * params, batch)`` of shape ``[batch, num_classes]``."""
    _check_batch(net, batch)
    _check_aligned(params, mask)
    logits, _ = _forward(net, _effective(params, mask), batch, keep=False)
    _check_finite("logits", logits)
    return logits


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient with respect to the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    s = ez.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    loss = float(np.mean(np.log(s[:, 0]) - z[np.arange(n), labels]))
    g = ez / s
    g[np.arange(n), labels] -= 1.0
    return loss, g / n


def loss_and_grads(net: NetworkSpec, params: ParameterSet, mask: Optional[Mapping],
                   batch: np.ndarray, labels: np.ndarray):
    """Like :func:`backward` but also returns the logits of the forward pass."""
    _check_batch(net, batch)
    _check_aligned(params, mask)
    labels = np.asarray(labels)
    if labels.shape != (batch.shape[0],):
        raise ShapeError("one label per sample required")
    if labels.size and (labels.min() < 0 or labels.max() >= net.num_classes):
        raise InputError(f"labels must lie in [0, {net.num_classes})")
    weights = _effective(params, mask)
    logits, caches = _forward(net, weights, batch, keep=True)
    _check_finite("logits", logits)
    loss, g = cross_entropy(logits, labels)

    grads = {}
    for i in range(len(net.layers) - 1, -1, -1):
        layer, cache = net.layers[i], caches[i]
        if isinstance(layer, Linear):
            grads[f"{i}.weight"] = g.T @ cache
            if layer.bias:
                grads[f"{i}.bias"] = g.sum(axis=0)
            if i:
                g = g @ weights[f"{i}.weight"]
        elif isinstance(layer, Conv2d):
            conv_cache, in_shape = cache
            dx, dw, db = _conv_backward(g, weights[f"{i}.weight"], conv_cache, layer.stride, layer.padding, in_shape)
            grads[f"{i}.weight"] = dw
            if layer.bias:
                grads[f"{i}.bias"] = db
            g = dx
        elif isinstance(layer, ReLU):
            g = g * cache
        elif isinstance(layer, MaxPool2d):
            arg, in_shape = cache
            g = _pool_backward(g, arg, layer.kernel, layer.step, in_shape)
        elif isinstance(layer, Flatten):
            g = g.reshape(cache)

    out = {}
    for n in params:
        gn = grads[n]
        if mask is not None and params.is_prunable(n):
            gn = gn * mask[n]
        out[n] = gn
    grad_set = ParameterSet(out, params.prunable)
    _check_finite("gradients", *out.values())
    return loss, grad_set, logits


def backward(net: NetworkSpec, params: ParameterSet, mask: Optional[Mapping],
             batch: np.ndarray, labels: np.ndarray) -> tuple[float, ParameterSet]:
    """Mean cross-entropy loss and its gradient; masked-out weights get exactly zero gradient."""
    loss, grads, _ = loss_and_grads(net, params, mask, batch, labels)
    return loss, grads


def predict(net: NetworkSpec, params: ParameterSet, mask: Optional[Mapping], x: np.ndarray,
            batch_size: int = 1024) -> np.ndarray:
    """Argmax class per sample; ties resolve to the lowest class index."""
    out = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], batch_size):
        out[start:start + batch_size] = forward(net, params, mask, x[start:start + batch_size]).argmax(axis=1)
    return out


def accuracy(net, params, mask, x, y, batch_size: int = 1024) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(predict(net, params, mask, x, batch_size) == y))


# ---------------------------------------------------------------------------
# optimizer and schedules


@dataclass
class OptimizerState:
    buffers: ParameterSet
    momentum: float = 0.9
    weight_decay: float = 1e-4

    @classmethod
    def zeros(cls, params: ParameterSet, momentum=0.9, weight_decay=1e-4) -> "OptimizerState":
        return cls(params.zeros_like(), momentum, weight_decay)


def sgd_step(params: ParameterSet, grads: ParameterSet, opt: OptimizerState, lr: float,
             mask: Optional[Mapping] = None) -> ParameterSet:
    """In-place SGD with momentum and L2 weight decay.

    ``v <- momentum * v + (g + wd * w)``, ``w <- w - lr * v``; masked positions of
    both ``w`` and ``v`` are then reset to zero.
    """
    for n in params:
        w, v = params[n], opt.buffers[n]
        if v.shape != w.shape or grads[n].shape != w.shape:
            raise ShapeError(f"optimizer state for {n!r} misaligned")
        v *= opt.momentum
        v += grads[n]
        if opt.weight_decay:
            v += opt.weight_decay * w
        w -= lr * v
        if mask is not None and params.is_prunable(n):
            m = mask[n]
            w *= m
            v *= m
        _check_finite(f"parameter {n}", w)
    return params


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    total_iterations: int
    milestones: tuple = ()
    decay: float = 0.1
    warmup_iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        if self.total_iterations < 1:
            raise InputError("total_iterations must be positive")
        ms = self.milestones
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise InputError(f"milestones must be strictly increasing: {ms}")
        if ms and ms[-1] >= self.total_iterations:
            raise InputError("milestones must be < total_iterations")
        if self.warmup_iterations < 0 or (ms and self.warmup_iterations >= ms[0]):
            raise InputError("warmup must end before the first milestone")


def lr_at(schedule: LrSchedule, iteration: int) -> float:
    if schedule.warmup_iterations and iteration < schedule.warmup_iterations:
        return schedule.base_lr * (iteration + 1) / schedule.warmup_iterations
    k = sum(1 for m in schedule.milestones if m <= iteration)
    return schedule.base_lr * schedule.decay ** k


# learning rate and warmup per variant; warmup given in epochs at the 182-epoch reference length
LR_VARIANTS = {"standard": (0.1, 0), "low": (0.01, 0), "warmup": (0.03, 15)}
REFERENCE_EPOCHS = 182
REFERENCE_MILESTONES = (91, 136)


def make_schedule(variant: str, epochs: int, iters_per_epoch: int, base_lr: Optional[float] = None,
                  milestones: Optional[Sequence[int]] = None, warmup_epochs: Optional[int] = None) -> LrSchedule:
    """Multi-step schedule in iterations for one of the ``standard``/``low``/``warmup`` variants.

    Milestones default to epochs 91 and 136 of 182, scaled to ``epochs``; they
    are counted in completed epochs (milestone ``e`` starts at iteration ``e * iters_per_epoch``).
    """
    if variant not in LR_VARIANTS:
        raise InputError(f"unknown lr variant {variant!r}")
    lr, wu = LR_VARIANTS[variant]
    if base_lr is not None:
        lr = base_lr
    if milestones is None:
        milestones = sorted({max(1, round(m * epochs / REFERENCE_EPOCHS)) for m in REFERENCE_MILESTONES})
        milestones = [m for m in milestones if m < epochs]
    if warmup_epochs is None:
        warmup_epochs = round(wu * epochs / REFERENCE_EPOCHS) if wu else 0
        if wu and warmup_epochs < 1:
            warmup_epochs = 1
    total = epochs * iters_per_epoch
    ms = [m * iters_per_epoch for m in milestones]
    return LrSchedule(lr, total, tuple(ms), 0.1, warmup_epochs * iters_per_epoch)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int
    schedule: LrSchedule
    batch_size: int = 128
    momentum: float = 0.9
    weight_decay: float = 1e-4
    max_iterations: Optional[int] = None  # None: epochs * ceil(|D| / batch_size)
    rewind_epoch: Optional[int] = None


@dataclass
class EpochRecord:
    epoch: int
    iterations: int
    lr: float
    loss: float
    train_acc: float
    val_acc: float
    extra: dict = field(default_factory=dict)


@dataclass
class Hooks:
    """``on_batch(indices, correct)`` sees pre-update predictions of each minibatch.

    ``on_epoch_end(epoch, params, record)`` runs after every epoch and may
    return True to stop training.
    """

    on_batch: Optional[Callable[[np.ndarray, np.ndarray], None]] = None
    on_epoch_end: Optional[Callable[[int, ParameterSet, EpochRecord], bool]] = None


@dataclass
class TrainResult:
    params: ParameterSet
    opt: OptimizerState
    records: list
    iterations: int
    snapshot: Optional[ParameterSet]
    stopped_early: bool = False


def iterations_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def train_epochs(net: NetworkSpec, params: ParameterSet, mask: Optional[Mapping],
                 x: np.ndarray, y: np.ndarray, indices: np.ndarray, config: TrainConfig,
                 rng: RngStream, hooks: Optional[Hooks] = None,
                 val: Optional[tuple[np.ndarray, np.ndarray]] = None,
                 augment: Optional[Callable[[np.ndarray, RngStream], np.ndarray]] = None) -> TrainResult:
    """Train ``f(mask * params)`` on ``x[indices]`` from a fresh optimizer state.

    Each epoch draws one permutation of ``indices`` from ``rng``; the last
    partial batch is kept. Training ends after ``config.epochs`` epochs or
    ``config.max_iterations`` iterations, whichever comes first, or when the
    epoch-end hook asks to stop. The schedule is indexed by the global
    iteration count. A copy of the parameters is taken at the end of
    ``config.rewind_epoch`` (epoch 0 means the starting weights).
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise InputError("cannot train on an empty dataset")
    hooks = hooks or Hooks()
    params = params.masked(mask) if mask is not None else params.copy()
    _check_aligned(params, mask)
    opt = OptimizerState.zeros(params, config.momentum, config.weight_decay)
    ipe = iterations_per_epoch(indices.size, config.batch_size)
    budget = config.epochs * ipe if config.max_iterations is None else config.max_iterations
    snapshot = params.copy() if config.rewind_epoch == 0 else None
    records: list[EpochRecord] = []
    it = 0
    epoch = 0
    stopped = False
    while it < budget and epoch < config.epochs:
        epoch += 1
        order = indices[rng.permutation(indices.size)]
        loss_sum = 0.0
        correct = 0
        seen = 0
        lr = 0.0
        for start in range(0, order.size, config.batch_size):
            if it >= budget:
                break
            idx = order[start:start + config.batch_size]
            xb = x[idx]
            if augment is not None:
                xb = augment(xb, rng)
            yb = y[idx]
            loss, grads, logits = loss_and_grads(net, params, mask, xb, yb)
            ok = logits.argmax(axis=1) == yb
            if hooks.on_batch is not None:
                hooks.on_batch(idx, ok)
            lr = lr_at(config.schedule, min(it, config.schedule.total_iterations - 1))
            sgd_step(params, grads, opt, lr, mask)
            it += 1
            loss_sum += loss * idx.size
            correct += int(ok.sum())
            seen += idx.size
        val_acc = accuracy(net, params, mask, val[0], val[1]) if val is not None and len(val[1]) else float("nan")
        rec = EpochRecord(epoch, it, lr, loss_sum / max(seen, 1), correct / max(seen, 1), val_acc)
        records.append(rec)
        if config.rewind_epoch is not None and epoch == config.rewind_epoch:
            snapshot = params.copy()
        if hooks.on_epoch_end is not None and hooks.on_epoch_end(epoch, params, rec):
            stopped = it < budget
            break
    return TrainResult(params, opt, records, it, snapshot, stopped)


# ---------------------------------------------------------------------------
# checkpoint files

_CKPT_MAGIC = b"PRAC"
_CKPT_VERSION = 1


def save_checkpoint(path, params: ParameterSet) -> None:
    """Write ``params`` as: magic ``PRAC``, u32 version, u32 count, then per entry
    u32 name length, UTF-8 name, u32 rank, u64 dims, little-endian float64 values.
    """
    parts = [_CKPT_MAGIC, struct.pack("<II", _CKPT_VERSION, len(params))]
    for name, value in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", value.ndim) + struct.pack(f"<{value.ndim}Q", *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> ParameterSet:
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4) != _CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic")
    version, count = struct.unpack("<II", take(8))
    if version != _CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        try:
            name = take(nlen).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: bad parameter name") from exc
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        size = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(dims).astype(np.float64)
    if pos != len(data):
        raise FormatError(f"{path}: trailing bytes in checkpoint")
    return ParameterSet(tensors)
