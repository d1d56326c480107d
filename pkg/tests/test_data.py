import gzip

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prac.data import (
    AugmentConfig, Dataset, SplitSpec, SynthSpec, augment, crop_offsets, load_idx, load_raw_labeled, quantize,
    read_idx, save_raw_labeled, split, synthesize, write_idx,
)
from prac.errors import FormatError, InputError
from prac.rng import RngStream

IMAGES = bytes([0, 0, 0x08, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3, 4, 250, 251, 252, 255])
LABELS = bytes([0, 0, 0x08, 1, 0, 0, 0, 2, 7, 3])


class TestIdx:
    def test_fixture_pixels(self, tmp_path):
        (tmp_path / "i").write_bytes(IMAGES)
        (tmp_path / "l").write_bytes(LABELS)
        ds = load_idx(tmp_path / "i", tmp_path / "l", num_classes=10)
        assert ds.inputs.shape == (2, 1, 2, 2) and ds.inputs.dtype == np.uint8
        assert ds.inputs[0, 0].tolist() == [[1, 2], [3, 4]]
        assert ds.inputs[1, 0].tolist() == [[250, 251], [252, 255]]
        assert ds.labels.tolist() == [7, 3]

    def test_gzip_and_write_round_trip(self, tmp_path):
        (tmp_path / "i.gz").write_bytes(gzip.compress(IMAGES))
        arr = read_idx(tmp_path / "i.gz")
        write_idx(tmp_path / "o", arr)
        assert (tmp_path / "o").read_bytes() == IMAGES
        f = np.array([[1.5, -2.0]], dtype=np.float64)
        write_idx(tmp_path / "f.gz", f)
        assert np.array_equal(read_idx(tmp_path / "f.gz"), f)

    def test_truncated_and_magic(self, tmp_path):
        cases = {"t": IMAGES[:-1], "h": IMAGES[:9], "m": b"\x01" + IMAGES[1:], "x": IMAGES + b"\0"}
        for name, raw in cases.items():
            (tmp_path / name).write_bytes(raw)
            with pytest.raises(FormatError):
                read_idx(tmp_path / name)

    def test_label_range(self, tmp_path):
        (tmp_path / "i").write_bytes(IMAGES)
        (tmp_path / "l").write_bytes(LABELS)
        with pytest.raises(InputError):
            load_idx(tmp_path / "i", tmp_path / "l", num_classes=5)


class TestRaw:
    def test_one_record(self, tmp_path):
        raw = bytes([2]) + bytes(range(12))
        (tmp_path / "r.bin").write_bytes(raw)
        ds = load_raw_labeled(tmp_path / "r.bin", 3, 2, 2, 10)
        assert ds.labels.tolist() == [2]
        assert ds.inputs[0, 2].tolist() == [[8, 9], [10, 11]]
        save_raw_labeled(tmp_path / "o.bin", ds)
        assert (tmp_path / "o.bin").read_bytes() == raw

    def test_errors(self, tmp_path):
        (tmp_path / "short.bin").write_bytes(bytes(12))
        with pytest.raises(FormatError):
            load_raw_labeled(tmp_path / "short.bin", 3, 2, 2, 10)
        (tmp_path / "lab.bin").write_bytes(bytes([10]) + bytes(12))
        with pytest.raises(FormatError):
            load_raw_labeled(tmp_path / "lab.bin", 3, 2, 2, 10)

    def test_synthetic_export(self, tmp_path):
        ds = quantize(synthesize(SynthSpec(classes=3, per_class=4, dims=(1, 4, 4))))
        save_raw_labeled(tmp_path / "s.bin", ds)
        back = load_raw_labeled(tmp_path / "s.bin", 1, 4, 4, 3)
        assert np.array_equal(back.inputs, ds.inputs) and np.array_equal(back.labels, ds.labels)


class TestSplit:
    def _ds(self, n):
        return Dataset(np.zeros((n, 2)), np.zeros(n, dtype=int), 1)

    def test_sizes(self):
        tr, va = split(self._ds(100), SplitSpec(0.10, 3))
        assert (tr.size, va.size) == (90, 10)
        tr, va = split(self._ds(100), SplitSpec(0.0))
        assert va.size == 0 and tr.tolist() == list(range(100))

    def test_deterministic(self):
        a = split(self._ds(50), SplitSpec(0.2, 1))
        b = split(self._ds(50), SplitSpec(0.2, 1))
        c = split(self._ds(50), SplitSpec(0.2, 2))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not np.array_equal(a[1], c[1])

    @given(st.integers(1, 500), st.floats(0, 0.95), st.integers(0, 100))
    def test_partition(self, n, frac, seed):
        tr, va = split(self._ds(n), SplitSpec(frac, seed))
        assert np.array_equal(np.sort(np.concatenate([tr, va])), np.arange(n))

    def test_invalid(self):
        with pytest.raises(InputError):
            SplitSpec(1.0)


class TestAugment:
    def test_identity(self):
        x = RngStream(0).normal(size=(4, 3, 5, 5))
        out = augment(x, AugmentConfig(pad=0, random_crop=True, horizontal_flip=False), RngStream(1))
        assert np.array_equal(out, x)

    def test_forced_flip_twice(self):
        x = RngStream(0).normal(size=(4, 3, 5, 5))
        cfg = AugmentConfig(pad=0, horizontal_flip=False)
        once = augment(x, cfg, RngStream(1), force_flip=True)
        assert np.array_equal(once, x[..., ::-1])
        assert np.array_equal(augment(once, cfg, RngStream(1), force_flip=True), x)

    def test_crop_offsets_uniform(self):
        off = crop_offsets(90000, 4, RngStream(3))
        assert off.min() == 0 and off.max() == 8
        counts = np.bincount(off[:, 0] * 9 + off[:, 1], minlength=81)
        expected = 90000 / 81
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert chi2 < 140  # 80 degrees of freedom, far above the 0.999 quantile of about 125

    def test_crop_is_shifted_window(self):
        x = np.arange(16.0).reshape(1, 1, 4, 4)
        rng = RngStream(5)
        off = crop_offsets(1, 1, RngStream(5))[0]
        out = augment(x, AugmentConfig(pad=1, horizontal_flip=False), rng)
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        assert np.array_equal(out[0, 0], padded[0, 0, off[0]:off[0] + 4, off[1]:off[1] + 4])

    @settings(max_examples=30)
    @given(st.integers(0, 5), st.booleans(), st.booleans(), st.integers(0, 1000))
    def test_shape_preserved(self, pad, crop, flip, seed):
        x = RngStream(seed).normal(size=(3, 2, 6, 6))
        assert augment(x, AugmentConfig(pad, crop, flip), RngStream(seed, 1)).shape == x.shape

    def test_vectors_pass_through(self):
        x = np.ones((3, 4))
        assert augment(x, AugmentConfig(), RngStream(0)) is x


class TestSynth:
    def test_counts_and_determinism(self):
        synth = SynthSpec(classes=5, per_class=37, test_per_class=11, dims=(1, 4, 4))
        a, b = synthesize(synth), synthesize(synth)
        assert np.bincount(a.labels).tolist() == [37] * 5
        assert np.bincount(synthesize(synth, "test").labels).tolist() == [11] * 5
        assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.labels, b.labels)
        assert a.inputs.shape == (185, 1, 4, 4)

    def test_vector_dims(self):
        ds = synthesize(SynthSpec(classes=3, per_class=10, dims=(7,)))
        assert ds.inputs.shape == (30, 7)

    def test_no_noise_clusters_are_separable(self):
        synth = SynthSpec(classes=4, per_class=50, dims=(6,), spread=0.0, ambiguous_fraction=0.0, modes=1)
        ds = synthesize(synth)
        # every sample sits exactly on its class center
        for c in range(4):
            pts = ds.inputs[ds.labels == c]
            assert np.allclose(pts, pts[0])

    def test_bad_part(self):
        with pytest.raises(InputError):
            synthesize(SynthSpec(), "val")

    def test_normalization(self):
        ds = Dataset(np.full((2, 2, 1, 1), 255, dtype=np.uint8), np.zeros(2, dtype=int), 1,
                     mean=[0.5, 1.0], std=[0.25, 2.0])
        assert ds.features[:, :, 0, 0].tolist() == [[2.0, 0.0], [2.0, 0.0]]
