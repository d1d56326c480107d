"""Find a 48.8%-sparse MLP ticket on synthetic data and compare it with vanilla IMP."""

from prac.baselines import vanilla_lt
from prac.data import SplitSpec, SynthSpec, make_task, synthesize
from prac.nn import build_network
from prac.stats import SelectionConfig
from prac.ticket import EarlyStopConfig, TicketRunConfig, evaluate_ticket, find_ticket, ticket_init

synth = SynthSpec()
task = make_task(synthesize(synth, "train"), synthesize(synth, "test"), SplitSpec(0.1, 0))
net = build_network("mlp", task.input_shape, task.num_classes)
cfg = TicketRunConfig(target_sparsity=0.4, epochs=20, rewind_epoch=3,
                      selection=SelectionConfig(0), early_stop=EarlyStopConfig(True, 0.07))

for name, search in (("prac", find_ticket), ("vanilla", vanilla_lt)):
    res = search(cfg, net, task, seed=0)
    print(f"{name}:")
    for r in res.log.rounds:
        print(f"  round {r.round}: sparsity {100 * r.sparsity:5.2f}%  trained on {r.train_size:5d} samples"
              f"  for {r.iterations:4d} iterations  |PrAC|={r.prac}")
    acc = evaluate_ticket(cfg, net, task, res.mask, ticket_init(res, "rewind", net, res.mask, 0), seed=0)
    print(f"  finding iterations {res.log.cumulative_iterations}, ticket test accuracy {acc.test_acc:.4f}")
