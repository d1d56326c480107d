"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, keys are dotted. Lists are
comma separated; shapes are written ``1x8x8``. Recognized keys and defaults
are listed in :data:`DEFAULTS`; unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..baselines import BASELINE_KINDS
from ..data import AugmentConfig, SplitSpec, SynthSpec, Task, load_idx, load_raw_labeled, make_task, synthesize
from ..errors import InputError
from ..nn import ARCHITECTURES, NetworkSpec, build_network
from ..stats import SelectionConfig
from ..ticket import EarlyStopConfig, TicketRunConfig

DEFAULTS: dict[str, str] = {
    "name": "experiment",
    "output": "run",
    "arch": "mlp",
    "seeds": "0, 1, 2",
    "methods": "prac, vanilla-lt",
    "evaluate": "final",          # none | final | all
    "eval_init": "rewind",        # rewind | theta0
    "data.kind": "synthetic",     # synthetic | idx | raw
    "data.classes": "10",
    "data.dims": "1x8x8",
    "data.per_class": "1000",
    "data.test_per_class": "200",
    "data.spread": "1.0",
    "data.separation": "5.0",
    "data.ambiguous_fraction": "0.1",
    "data.modes": "4",
    "data.smooth": "2",
    "data.seed": "0",
    "data.train_images": "",
    "data.train_labels": "",
    "data.test_images": "",
    "data.test_labels": "",
    "data.train_path": "",
    "data.test_path": "",
    "data.shape": "",
    "data.num_classes": "",
    "data.mean": "",
    "data.std": "",
    "data.val_fraction": "0.1",
    "data.split_seed": "0",
    "augment.enabled": "false",
    "augment.pad": "4",
    "augment.crop": "true",
    "augment.flip": "true",
    "ticket.target_sparsity": "0.4",
    "ticket.prune_ratio": "0.2",
    "ticket.epochs": "20",
    "ticket.batch_size": "128",
    "ticket.rewind_epoch": "3",
    "ticket.forget_threshold": "0",
    "ticket.include_never_learned": "true",
    "ticket.early_stop": "true",
    "ticket.distance_threshold": "0.07",
    "ticket.patience": "1",
    "ticket.early_stop_mode": "consecutive",
    "ticket.dynamic_iterations": "true",
    "ticket.lr_variant": "standard",
    "ticket.lr": "",
    "ticket.milestones": "",
    "ticket.warmup_epochs": "",
    "ticket.momentum": "0.9",
    "ticket.weight_decay": "0.0001",
    "ticket.prune_scope": "global",
    "ticket.correctness": "presentation",
    "baseline.random_scope": "layer",
}

METHODS = ("prac",) + BASELINE_KINDS


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def format_config(values: dict[str, str]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise InputError(f"not a boolean: {v!r}")


def _list(v: str) -> list[str]:
    return [s.strip() for s in v.split(",") if s.strip()]


def _shape(v: str) -> tuple:
    return tuple(int(s) for s in v.lower().split("x"))


def _opt_float(v: str) -> Optional[float]:
    return float(v) if v.strip() else None


@dataclass
class ExperimentConfig:
    values: dict

    @classmethod
    def from_dict(cls, given: dict[str, str]) -> "ExperimentConfig":
        unknown = set(given) - set(DEFAULTS) - {"kind", "seed", "source"}
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        values = dict(DEFAULTS)
        values.update(given)
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(parse_config_text(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    def __getitem__(self, key):
        return self.values[key]

    def with_values(self, **updates) -> "ExperimentConfig":
        values = dict(self.values)
        values.update({k.replace("__", "."): str(v) for k, v in updates.items()})
        return ExperimentConfig.from_dict(values)

    def to_text(self) -> str:
        return format_config(self.values)

    # -- typed views -------------------------------------------------------

    @property
    def name(self) -> str:
        return self["name"]

    @property
    def seeds(self) -> list[int]:
        return [int(s) for s in _list(self["seeds"])]

    @property
    def methods(self) -> list[str]:
        return _list(self["methods"])

    def validate(self) -> None:
        if not self.seeds:
            raise InputError("seeds must be non-empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise InputError(f"unknown methods {bad}; expected from {list(METHODS)}")
        if self["arch"] not in ARCHITECTURES:
            raise InputError(f"unknown arch {self['arch']!r}")
        if self["evaluate"] not in ("none", "final", "all"):
            raise InputError("evaluate must be none, final or all")
        if self["eval_init"] not in ("rewind", "theta0"):
            raise InputError("eval_init must be rewind or theta0")
        if self["data.kind"] not in ("synthetic", "idx", "raw"):
            raise InputError(f"unknown data.kind {self['data.kind']!r}")
        self.ticket()

    def ticket(self) -> TicketRunConfig:
        v = self.values
        ms = _list(v["ticket.milestones"])
        return TicketRunConfig(
            target_sparsity=float(v["ticket.target_sparsity"]),
            epochs=int(v["ticket.epochs"]),
            prune_ratio=float(v["ticket.prune_ratio"]),
            batch_size=int(v["ticket.batch_size"]),
            rewind_epoch=int(v["ticket.rewind_epoch"]),
            selection=SelectionConfig(int(v["ticket.forget_threshold"]), _bool(v["ticket.include_never_learned"])),
            early_stop=EarlyStopConfig(_bool(v["ticket.early_stop"]), float(v["ticket.distance_threshold"]),
                                       int(v["ticket.patience"]), v["ticket.early_stop_mode"]),
            dynamic_iterations=_bool(v["ticket.dynamic_iterations"]),
            lr_variant=v["ticket.lr_variant"],
            base_lr=_opt_float(v["ticket.lr"]),
            milestones=tuple(int(m) for m in ms) if ms else None,
            warmup_epochs=int(v["ticket.warmup_epochs"]) if v["ticket.warmup_epochs"].strip() else None,
            momentum=float(v["ticket.momentum"]),
            weight_decay=float(v["ticket.weight_decay"]),
            prune_scope=v["ticket.prune_scope"],
            correctness=v["ticket.correctness"],
        )

    def synth_spec(self) -> SynthSpec:
        v = self.values
        return SynthSpec(
            classes=int(v["data.classes"]), dims=_shape(v["data.dims"]),
            per_class=int(v["data.per_class"]), test_per_class=int(v["data.test_per_class"]),
            spread=float(v["data.spread"]), separation=float(v["data.separation"]),
            ambiguous_fraction=float(v["data.ambiguous_fraction"]), modes=int(v["data.modes"]),
            smooth=int(v["data.smooth"]), seed=int(v["data.seed"]),
        )

    def task(self) -> Task:
        v = self.values
        kind = v["data.kind"]
        if kind == "synthetic":
            spec = self.synth_spec()
            train, test = synthesize(spec, "train"), synthesize(spec, "test")
        elif kind == "idx":
            nc = int(v["data.num_classes"]) if v["data.num_classes"] else None
            train = load_idx(v["data.train_images"], v["data.train_labels"], nc, "idx-train")
            test = load_idx(v["data.test_images"], v["data.test_labels"], nc or train.num_classes, "idx-test")
            if nc is None:
                test.num_classes = train.num_classes = max(train.num_classes, test.num_classes)
        else:
            c, h, w = _shape(v["data.shape"])
            nc = int(v["data.num_classes"])
            train = load_raw_labeled(v["data.train_path"], c, h, w, nc, "raw-train")
            test = load_raw_labeled(v["data.test_path"], c, h, w, nc, "raw-test")
        if v["data.mean"]:
            mean = [float(s) for s in _list(v["data.mean"])]
            std = [float(s) for s in _list(v["data.std"])]
            train.mean = test.mean = mean
            train.std = test.std = std
        aug = None
        if _bool(v["augment.enabled"]):
            aug = AugmentConfig(int(v["augment.pad"]), _bool(v["augment.crop"]), _bool(v["augment.flip"]))
        split = SplitSpec(float(v["data.val_fraction"]), int(v["data.split_seed"]))
        return make_task(train, test, split, aug)

    def network(self, task: Task, arch: Optional[str] = None) -> NetworkSpec:
        return build_network(arch or self["arch"], task.input_shape, task.num_classes)
