import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from prac.errors import FormatError, InputError
from prac.nn import ParameterSet, build_network, init_params
from prac.pruning import (
    PruneConfig, SparseMask, candidate_mask, global_magnitude_prune, hamming, load_mask, prune_by_scores,
    relative_similarity, rounds_to_exceed, save_mask, sparsity, sparsity_after,
)
from prac.rng import RngStream

# Sparsity column of the pruning-schedule table, percent
REFERENCE_SPARSITY = [20.00, 36.00, 48.80, 59.04, 67.23, 73.79, 79.03, 83.22, 86.58,
                      89.26, 91.41, 93.13, 94.50, 95.60, 96.48]


def vec_params(values):
    return ParameterSet({"0.weight": np.asarray(values, dtype=float)})


def flat_mask(bits):
    return SparseMask({"0.weight": np.asarray(bits, dtype=bool)})


class TestPrune:
    def test_smallest_magnitude_removed(self):
        p = vec_params([0.9, -0.5, 0.2, 0.05, -0.3])
        for fn in (global_magnitude_prune, candidate_mask):
            m = fn(p, SparseMask.ones(p), PruneConfig(0.2))
            assert m["0.weight"].astype(int).tolist() == [1, 1, 1, 0, 1]

    def test_candidate_is_non_destructive(self):
        p = vec_params([0.9, -0.5, 0.2, 0.05, -0.3])
        mask = SparseMask.ones(p)
        candidate_mask(p, mask)
        assert mask.count() == 5

    def test_global_ranking_across_tensors(self):
        p = ParameterSet({"0.weight": np.array([5.0, 0.1, 4.0]), "1.weight": np.array([0.2, 3.0])})
        m = global_magnitude_prune(p, SparseMask.ones(p), PruneConfig(0.4))
        assert m["0.weight"].tolist() == [True, False, True] and m["1.weight"].tolist() == [False, True]

    def test_ties_stable_order(self):
        p = ParameterSet({"0.weight": np.array([1.0, 1.0]), "1.weight": np.array([1.0, 1.0, 1.0])})
        m = global_magnitude_prune(p, SparseMask.ones(p), PruneConfig(0.4))
        assert m["0.weight"].tolist() == [False, False] and m["1.weight"].all()

    def test_zero_weights_pruned_first(self):
        p = vec_params([0.0, -0.0, 1e-300, 1.0, 2.0])
        m = global_magnitude_prune(p, SparseMask.ones(p), PruneConfig(0.4))
        assert m["0.weight"].tolist() == [False, False, True, True, True]

    def test_already_pruned_positions_ignored(self):
        p = vec_params([0.01, 0.02, 3.0, 4.0, 5.0, 6.0])
        m = global_magnitude_prune(p, flat_mask([0, 0, 1, 1, 1, 1]), PruneConfig(0.25))
        assert m["0.weight"].astype(int).tolist() == [0, 0, 0, 1, 1, 1]
        m = global_magnitude_prune(p, flat_mask([0, 0, 1, 1, 1, 1]), PruneConfig(0.5))
        assert m["0.weight"].astype(int).tolist() == [0, 0, 0, 0, 1, 1]

    def test_emptying_the_network_is_an_error(self):
        p = vec_params([1.0, 2.0])
        # ratio < 1 leaves at least one survivor, so a lone weight is kept
        assert global_magnitude_prune(p, flat_mask([0, 1]), PruneConfig(0.9))["0.weight"].tolist() == [False, True]
        with pytest.raises(InputError):
            global_magnitude_prune(p, flat_mask([0, 0]), PruneConfig(0.2))

    def test_layer_scope(self):
        p = ParameterSet({"0.weight": np.arange(1.0, 11.0), "1.weight": np.arange(100.0, 110.0)})
        m = global_magnitude_prune(p, SparseMask.ones(p), PruneConfig(0.2, "layer"))
        assert m.layer_counts() == {"0.weight": 8, "1.weight": 8}
        g = global_magnitude_prune(p, SparseMask.ones(p), PruneConfig(0.2, "global"))
        assert g.layer_counts() == {"0.weight": 6, "1.weight": 10}

    def test_config_validation(self):
        for bad in (0.0, 1.0, -0.1):
            with pytest.raises(InputError):
                PruneConfig(bad)
        with pytest.raises(InputError):
            PruneConfig(0.2, "channel")

    def test_prune_by_scores_uses_scores(self):
        p = vec_params([0.9, -0.5, 0.2, 0.05, -0.3])
        scores = {"0.weight": np.array([0.0, 9.0, 9.0, 9.0, 9.0])}
        m = prune_by_scores(scores, SparseMask.ones(p), PruneConfig(0.2))
        assert m["0.weight"].astype(int).tolist() == [0, 1, 1, 1, 1]


class TestSchedule:
    def test_three_and_fifteen_rounds(self):
        assert 100 * sparsity_after(3) == pytest.approx(48.80, abs=5e-3)
        assert 100 * sparsity_after(15) == pytest.approx(96.48, abs=5e-3)

    def test_reference_column_closed_form(self):
        for k, pct in enumerate(REFERENCE_SPARSITY, 1):
            assert 100 * sparsity_after(k) == pytest.approx(pct, abs=0.005)

    def test_rounds_to_exceed(self):
        assert rounds_to_exceed(0.30) == 2
        assert rounds_to_exceed(0.40) == 3
        assert rounds_to_exceed(0.79) == 7
        assert rounds_to_exceed(0.96) == 15

    def test_fifteen_rounds_on_real_network(self):
        net = build_network("mlp", (1, 16, 16), 10)
        p = init_params(net, RngStream(0))
        assert p.num_prunable() >= 10**5
        mask = SparseMask.ones(p)
        for pct in REFERENCE_SPARSITY:
            before = mask.count()
            mask = global_magnitude_prune(p, mask)
            assert mask.count() == before - int(np.floor(0.2 * before))
            assert 100 * sparsity(mask) == pytest.approx(pct, abs=0.05)


class TestMetrics:
    def test_sparsity_extremes(self):
        p = vec_params(np.ones(7))
        assert sparsity(SparseMask.ones(p)) == 0.0
        assert sparsity(SparseMask.zeros(p)) == 1.0

    def test_hamming_examples(self):
        a, b = flat_mask([1, 1, 0, 0]), flat_mask([1, 0, 1, 0])
        assert hamming(a, b) == (2, 0.5)
        assert hamming(a, a) == (0, 0.0)
        assert hamming(a, flat_mask([0, 0, 1, 1])) == (4, 1.0)

    def test_relative_similarity_examples(self):
        a, b = flat_mask([1, 1, 0, 0]), flat_mask([1, 0, 1, 0])
        assert relative_similarity(a, b) == pytest.approx(1 / 3)
        assert relative_similarity(a, a) == 1.0
        assert relative_similarity(a, flat_mask([0, 0, 1, 1])) == 0.0
        with pytest.raises(InputError):
            relative_similarity(flat_mask([0, 0]), flat_mask([0, 0]))


bits = arrays(np.bool_, st.integers(1, 60))


@given(st.data())
def test_metric_symmetry(data):
    a = data.draw(bits)
    b = data.draw(arrays(np.bool_, a.size))
    ma, mb = flat_mask(a), flat_mask(b)
    assert hamming(ma, mb) == hamming(mb, ma)
    assert hamming(ma, mb)[0] == int(np.sum(a != b))
    if (a | b).any():
        assert relative_similarity(ma, mb) == relative_similarity(mb, ma)


@settings(deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 200), st.floats(0.05, 0.6), st.integers(1, 6))
def test_nesting_and_count_exactness(seed, n, ratio, rounds):
    rng = RngStream(seed)
    p = ParameterSet({"0.weight": rng.normal(size=n), "1.weight": rng.normal(size=(3, 4))})
    mask = SparseMask.ones(p)
    for _ in range(rounds):
        before = mask.count()
        if before - int(np.floor(ratio * before)) < 1:
            break
        new = global_magnitude_prune(p, mask, PruneConfig(ratio))
        assert new.is_subset_of(mask)
        assert new.count() == before - int(np.floor(ratio * before))
        mask = new


@settings(deadline=None)
@given(st.integers(0, 10**6), st.integers(5, 80))
def test_permutation_equivariance(seed, n):
    rng = RngStream(seed)
    w = rng.normal(size=n)
    assume(np.unique(np.abs(w)).size == n)
    keep = rng.uniform(size=n) < 0.8
    assume(keep.sum() >= 2)
    perm = rng.permutation(n)
    m = global_magnitude_prune(vec_params(w), flat_mask(keep))["0.weight"]
    mp = global_magnitude_prune(vec_params(w[perm]), flat_mask(keep[perm]))["0.weight"]
    assert np.array_equal(m[perm], mp)


@given(st.integers(1, 10**6), st.integers(1, 12))
def test_closed_form_within_one_weight_per_round(total, rounds):
    count = total
    for _ in range(rounds):
        count -= int(np.floor(0.2 * count))
    assert abs(count - total * 0.8**rounds) <= rounds + 1e-6 * total


class TestMaskFile:
    def test_round_trip(self, tmp_path):
        net = build_network("cnn", (1, 8, 8), 10)
        p = init_params(net, RngStream(0))
        rng = RngStream(5)
        m = SparseMask({n: rng.uniform(size=p[n].shape) < 0.3 for n in p.prunable})
        save_mask(tmp_path / "m.bin", m)
        back = load_mask(tmp_path / "m.bin", {n: p[n].shape for n in p.prunable})
        assert back == m
        flat = load_mask(tmp_path / "m.bin")
        assert np.array_equal(flat.flat(), m.flat())

    def test_bit_layout(self, tmp_path):
        save_mask(tmp_path / "m.bin", flat_mask([1, 0, 0, 0, 0, 0, 0, 0, 1, 1]))
        raw = (tmp_path / "m.bin").read_bytes()
        assert raw[:4] == b"MASK"
        assert raw[-2:] == bytes([0b00000001, 0b00000011])

    def test_corruption(self, tmp_path):
        save_mask(tmp_path / "m.bin", flat_mask([1, 0, 1]))
        raw = (tmp_path / "m.bin").read_bytes()
        (tmp_path / "t.bin").write_bytes(raw[:-1])
        (tmp_path / "b.bin").write_bytes(b"KSAM" + raw[4:])
        for name in ("t.bin", "b.bin"):
            with pytest.raises(FormatError):
                load_mask(tmp_path / name)
        with pytest.raises(FormatError):
            load_mask(tmp_path / "m.bin", {"0.weight": (4,)})

    @given(arrays(np.bool_, st.integers(0, 100)))
    def test_round_trip_property(self, tmp_path_factory, a):
        path = tmp_path_factory.mktemp("m") / "m.bin"
        save_mask(path, flat_mask(a))
        assert np.array_equal(load_mask(path)["0.weight"], a)
