import csv
import shutil

import numpy as np
import pytest

from prac.errors import InputError
from prac.harness.cli import main
from prac.harness.config import DEFAULTS, ExperimentConfig, parse_config_text
from prac.harness.report import read_matrix, report
from prac.harness.runner import SUMMARY_COLUMNS, load_source_sets, read_summary, run_experiment, transfer_prac
from prac.harness.verify import verify
from prac.nn import iterations_per_epoch
from prac.pruning import load_mask
from prac.ticket import find_ticket, vanilla_config

SMALL = """
name = t
seeds = 0, 1, 2
methods = prac, vanilla-lt, random-ticket, random-subset
data.classes = 4
data.per_class = 60
data.test_per_class = 20
ticket.epochs = 6
ticket.batch_size = 32
ticket.rewind_epoch = 1
ticket.target_sparsity = 0.3
evaluate = final
"""


def small_cfg(**over):
    cfg = ExperimentConfig.from_text(SMALL)
    return cfg.with_values(**over) if over else cfg


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    return run_experiment(small_cfg(), out=out)


class TestConfig:
    def test_parse(self):
        vals = parse_config_text("a = 1  # note\n\n# comment\nb.c=x y\n")
        assert vals == {"a": "1", "b.c": "x y"}

    def test_unknown_key_and_bad_values(self):
        with pytest.raises(InputError):
            ExperimentConfig.from_text("nope = 1\n")
        with pytest.raises(InputError):
            ExperimentConfig.from_text("methods = prac, magic\n")
        with pytest.raises(InputError):
            ExperimentConfig.from_text("seeds =\n")
        with pytest.raises(InputError):
            ExperimentConfig.from_text("arch = resnet\n")
        with pytest.raises(InputError):
            ExperimentConfig.from_text("line without equals\n")

    def test_defaults_round_trip(self):
        cfg = ExperimentConfig.from_dict({})
        assert ExperimentConfig.from_text(cfg.to_text()).values == DEFAULTS
        t = cfg.ticket()
        assert t.prune_ratio == 0.2 and t.rewind_epoch == 3 and t.early_stop.threshold == 0.07
        assert t.selection.forget_threshold == 0 and t.momentum == 0.9 and t.weight_decay == 1e-4
        assert cfg.seeds == [0, 1, 2]


class TestRun:
    def test_layout(self, experiment):
        run = experiment / "prac-s0"
        for f in ("config.txt", "summary.csv", "round_1/mask.bin", "round_1/rewind.bin", "round_1/prac.txt",
                  "round_1/log.csv", "round_1/forgetting.csv", "round_1/classes.csv", "round_2/mask.bin"):
            assert (run / f).exists(), f
        assert not (run / "round_2" / "rewind.bin").exists()
        cfg = parse_config_text((run / "config.txt").read_text())
        assert cfg["kind"] == "prac" and cfg["seed"] == "0"
        for f in ("config.txt", "summary.csv", "aggregate.csv", "timing.csv"):
            assert (experiment / f).exists()

    def test_summary_columns_and_counts(self, experiment):
        with open(experiment / "summary.csv") as fh:
            assert next(csv.reader(fh)) == SUMMARY_COLUMNS
        rows = read_summary(experiment / "summary.csv")
        for method in ("prac", "vanilla-lt", "random-ticket", "random-subset"):
            for rnd in (1, 2):
                assert len([r for r in rows if r["method"] == method and r["round"] == str(rnd)]) == 3

    def test_budget_parity(self, experiment):
        rows = read_summary(experiment / "summary.csv")
        ipe = iterations_per_epoch(216, 32)
        prac = {(r["seed"], r["round"]): int(r["cumulative_iterations"]) for r in rows if r["method"] == "prac"}
        for r in rows:
            if r["method"] in ("random-ticket", "random-subset"):
                assert abs(int(r["cumulative_iterations"]) - prac[(r["seed"], r["round"])]) <= ipe

    def test_byte_identical_rerun(self, experiment, tmp_path):
        again = run_experiment(small_cfg(), out=tmp_path, threads=2)
        assert (again / "summary.csv").read_bytes() == (experiment / "summary.csv").read_bytes()
        assert (again / "aggregate.csv").read_bytes() == (experiment / "aggregate.csv").read_bytes()

    def test_vanilla_only_matches_ticket_finder(self, tmp_path):
        cfg = small_cfg(methods="vanilla-lt", seeds="4", evaluate="none")
        exp = run_experiment(cfg, out=tmp_path)
        task = cfg.task()
        res = find_ticket(vanilla_config(cfg.ticket()), cfg.network(task), task, 4)
        for k, m in enumerate(res.masks, 1):
            assert np.array_equal(load_mask(exp / "vanilla-lt-s4" / f"round_{k}" / "mask.bin").flat(), m.flat())

    def test_baselines_need_prac(self, tmp_path):
        with pytest.raises(InputError):
            run_experiment(small_cfg(methods="random-subset"), out=tmp_path)


class TestTransfer:
    def test_self_transfer_identity(self, experiment):
        cfg = small_cfg()
        task = cfg.task()
        sets = load_source_sets(experiment / "prac-s0")
        res = transfer_prac(sets, cfg.network(task), cfg, task, 0)
        for k, m in enumerate(res.masks, 1):
            assert np.array_equal(load_mask(experiment / "prac-s0" / f"round_{k}" / "mask.bin").flat(), m.flat())

    def test_coverage_rule(self, experiment):
        cfg = small_cfg(ticket__target_sparsity="0.6")
        task = cfg.task()
        with pytest.raises(InputError):
            transfer_prac(load_source_sets(experiment / "prac-s0"), cfg.network(task), cfg, task, 0)

    def test_cli_transfer_to_cnn(self, experiment, tmp_path):
        out = tmp_path / "cnn"
        assert main(["transfer", "--from", str(experiment / "prac-s1"), "--arch", "cnn", "--out", str(out),
                     "--set", "ticket.lr_variant=low"]) == 0
        assert main(["verify", str(out)]) == 0
        rows = read_summary(out / "summary.csv")
        assert [r["round"] for r in rows] == ["1", "2"] and rows[0]["method"] == "transfer-cnn"


class TestReport:
    def test_outputs(self, experiment, tmp_path):
        paths = report([experiment], tmp_path)
        labels, dist = read_matrix(paths["distance"])
        assert np.all(np.diag(dist) == 0)
        assert np.array_equal(dist, dist.T)
        svg = paths["svg"].read_text()
        assert svg.startswith("<svg") and svg.count("<polyline") == 4
        with open(paths["similarity"]) as fh:
            rows = list(csv.DictReader(fh))
        assert rows and all(0 <= float(r["relative_similarity"]) <= 1 for r in rows)
        with open(paths["classes"]) as fh:
            ratios = list(csv.DictReader(fh))
        by_run = {}
        for r in ratios:
            by_run.setdefault((r["run"], r["round"]), 0.0)
            by_run[(r["run"], r["round"])] += float(r["ratio"])
        assert all(abs(v - 1) < 1e-5 for v in by_run.values())

    def test_single_run_single_curve(self, experiment, tmp_path):
        paths = report([experiment / "prac-s0"], tmp_path)
        assert paths["svg"].read_text().count("<polyline") == 1


class TestCli:
    def test_unknown_subcommand(self, capsys):
        assert main(["bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_verify_intact_and_truncated(self, experiment, tmp_path):
        assert main(["verify", str(experiment)]) == 0
        assert all(not p for p in verify([experiment]).values())
        broken = tmp_path / "b"
        shutil.copytree(experiment / "prac-s0", broken)
        mask = broken / "round_2" / "mask.bin"
        mask.write_bytes(mask.read_bytes()[:-5])
        assert main(["verify", str(broken)]) == 2

    def test_verify_detects_tampering(self, experiment, tmp_path):
        broken = tmp_path / "b"
        shutil.copytree(experiment / "prac-s0", broken)
        shutil.copy(broken / "round_1" / "mask.bin", broken / "round_2" / "mask.bin")
        problems = verify([broken])[str(broken)]
        assert problems
        assert main(["verify", str(broken)]) == 2

    def test_run_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "none.txt")]) == 2

    def test_run_and_report(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text(SMALL.replace("seeds = 0, 1, 2", "seeds = 0").replace(
            "methods = prac, vanilla-lt, random-ticket, random-subset", "methods = prac"))
        assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--seed", "5"]) == 0
        assert (tmp_path / "o" / "t" / "prac-s5" / "round_2" / "mask.bin").exists()
        assert main(["report", str(tmp_path / "o" / "t")]) == 0
        assert (tmp_path / "o" / "t" / "accuracy_vs_sparsity.svg").exists()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_error_exit(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text(SMALL + "ticket.lr = 1e200\nseeds = 0\nmethods = prac\n")
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 3
