import numpy as np
import pytest

from prac.data import SplitSpec, SynthSpec, make_task, synthesize
from prac.nn import Conv2d, Flatten, Linear, MaxPool2d, NetworkSpec, ReLU
from prac.ticket import EarlyStopConfig, TicketRunConfig


def small_task(per_class=60, classes=4, dims=(1, 8, 8), seed=0, **kw):
    spec = SynthSpec(classes=classes, dims=dims, per_class=per_class, test_per_class=20, seed=seed, **kw)
    return make_task(synthesize(spec, "train"), synthesize(spec, "test"), SplitSpec(0.1, seed))


def small_config(**kw):
    base = dict(target_sparsity=0.30, epochs=6, batch_size=32, rewind_epoch=1)
    base.update(kw)
    return TicketRunConfig(**base)


def all_layers_net():
    """Every layer type, including strided conv and overlapping pooling."""
    return NetworkSpec(
        (Conv2d(2, 3, 3, stride=2, padding=1), ReLU(), MaxPool2d(2), Conv2d(3, 4, 2, padding=1), ReLU(),
         MaxPool2d(2, 1), Flatten(), Linear(16, 5), ReLU(), Linear(5, 3)),
        3, (2, 7, 7))


@pytest.fixture
def tiny_task():
    return small_task()


__all__ = ["small_task", "small_config", "all_layers_net", "EarlyStopConfig", "np"]


# Acceptance criteria report one line each; they are collected here and
# repeated in the terminal summary so they survive output capture.
CRITERIA_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
