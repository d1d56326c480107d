"""Lottery-ticket search on pruning-aware critical (PrAC) data subsets."""

from .data import AugmentConfig, Dataset, SplitSpec, SynthSpec, Task, make_task, synthesize
from .errors import DegenerateRunError, FormatError, InputError, NumericError, PracError, ShapeError
from .nn import (
    LrSchedule,
    NetworkSpec,
    OptimizerState,
    ParameterSet,
    backward,
    build_network,
    forward,
    init_params,
    lr_at,
    sgd_step,
    train_epochs,
)
from .pruning import PruneConfig, SparseMask, global_magnitude_prune, hamming, relative_similarity, sparsity
from .rng import RngStream
from .stats import ForgettingLedger, PrACSet, SelectionConfig, build_prac, overlap_rate
from .ticket import (
    EarlyStopConfig,
    TicketRunConfig,
    dynamic_iterations,
    evaluate_ticket,
    find_ticket,
    rescale_schedule,
    rewind,
)

__version__ = "0.1.0"
