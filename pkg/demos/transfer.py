"""Reuse the PrAC sets found with an MLP to find a CNN ticket."""

from prac.data import SplitSpec, SynthSpec, make_task, synthesize
from prac.harness.config import ExperimentConfig
from prac.harness.runner import transfer_prac
from prac.nn import build_network
from prac.ticket import find_ticket

config = ExperimentConfig.from_dict({"ticket.target_sparsity": "0.4", "ticket.lr_variant": "low"})
synth = SynthSpec()
task = make_task(synthesize(synth, "train"), synthesize(synth, "test"), SplitSpec(0.1, 0))

mlp = build_network("mlp", task.input_shape, task.num_classes)
source = find_ticket(config.ticket(), mlp, task, seed=0)
sets = [p.indices for p in source.prac_sets]
print("MLP PrAC sizes per round:", [len(s) for s in sets])

cnn = build_network("cnn", task.input_shape, task.num_classes)
moved = transfer_prac(sets, cnn, config, task, seed=0)
native = find_ticket(config.ticket(), cnn, task, seed=0)
for label, res in (("transferred", moved), ("native", native)):
    print(f"{label:12s} iterations {res.log.cumulative_iterations:5d}  sparsity {100 * res.log.rounds[-1].sparsity:.2f}%")
