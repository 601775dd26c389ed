import json

import numpy as np
import pytest

from eegret.containers import write_array_container
from eegret.data import (EegDataset, SplitSpec, SyntheticSpec,
                         average_repetitions, class_latents, generate_synthetic,
                         load_dataset, split_train_val, synthetic_eval_set,
                         write_dataset)
from eegret.errors import ConfigurationError, DataError, IntegrityError


def make_dataset(n=12, reps=2, channels=4, timepoints=6, classes=3, seed=0, tag="train"):
    gen = np.random.default_rng(seed)
    return EegDataset(
        segments=gen.standard_normal((n, reps, channels, timepoints)).astype(np.float32),
        labels=np.arange(n, dtype=np.int64) % classes,
        class_count=classes,
        split_tag=tag,
    )


class TestLoadStore:
    def test_zero_payload_round_trip(self, tmp_path):
        write_array_container(
            tmp_path / "d", np.zeros((200, 1, 63, 250), np.float32), "f32le",
            labels=list(range(200)), class_count=200, split="test")
        ds = load_dataset(tmp_path / "d")
        assert ds.n_samples == 200 and ds.n_reps == 1
        assert ds.n_channels == 63 and ds.n_timepoints == 250
        assert not ds.segments.any()

    def test_truncated_payload_is_integrity_error(self, tmp_path):
        d = tmp_path / "d"
        d.mkdir()
        # header declares 63x250 but each segment only carries 63x249 values
        (d / "meta.json").write_text(json.dumps(
            {"shape": [2, 1, 63, 250], "dtype": "f32le", "labels": [0, 1]}))
        (d / "data.bin").write_bytes(b"\x00" * (2 * 63 * 249 * 4))
        with pytest.raises(IntegrityError):
            load_dataset(d)

    def test_write_load_bit_exact(self, tmp_path):
        ds = make_dataset(seed=5)
        write_dataset(tmp_path / "d", ds)
        back = load_dataset(tmp_path / "d")
        np.testing.assert_array_equal(back.segments, ds.segments)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.class_count == ds.class_count and back.split_tag == ds.split_tag

    def test_nan_payload_is_data_error(self, tmp_path):
        arr = np.zeros((2, 1, 3, 3), np.float32)
        arr[1, 0, 1, 1] = np.nan
        write_array_container(tmp_path / "d", arr, "f32le", labels=[0, 1])
        with pytest.raises(DataError):
            load_dataset(tmp_path / "d")


class TestAverageRepetitions:
    def test_single_rep_is_identity(self):
        ds = make_dataset(reps=1)
        out = average_repetitions(ds)
        np.testing.assert_array_equal(out.segments, ds.segments[:, 0])

    def test_opposite_reps_cancel(self):
        x = np.random.default_rng(0).standard_normal((3, 1, 4, 5))
        ds = EegDataset(segments=np.concatenate([x, -x], axis=1).astype(np.float64),
                        labels=np.zeros(3, np.int64), class_count=1, split_tag="train")
        out = average_repetitions(ds)
        np.testing.assert_allclose(out.segments, 0.0, atol=1e-15)

    def test_matches_elementwise_mean_oracle(self):
        ds = make_dataset(reps=4, seed=7)
        out = average_repetitions(ds)
        # independent oracle: plain running sum over the repetition axis
        acc = np.zeros(ds.segments.shape[0:1] + ds.segments.shape[2:], np.float64)
        for r in range(4):
            acc += ds.segments[:, r].astype(np.float64)
        np.testing.assert_allclose(out.segments, (acc / 4).astype(np.float32), rtol=1e-6)

    def test_commutes_with_reordering(self):
        ds = make_dataset(reps=3, seed=9)
        perm = np.random.default_rng(1).permutation(ds.n_samples)
        a = average_repetitions(ds).segments[perm]
        reordered = EegDataset(segments=ds.segments[perm], labels=ds.labels[perm],
                               class_count=ds.class_count, split_tag="train")
        b = average_repetitions(reordered).segments
        np.testing.assert_array_equal(a, b)


class TestSplit:
    def test_full_fraction_rejected(self):
        with pytest.raises(ConfigurationError):
            split_train_val(make_dataset(), SplitSpec(train_fraction=1.0, seed=0))

    def test_paper_scale_sizes(self):
        ds = EegDataset(segments=np.zeros((16540, 1, 2, 2), np.float32),
                        labels=np.zeros(16540, np.int64), class_count=1, split_tag="train")
        tr, va = split_train_val(ds, SplitSpec(train_fraction=0.95, seed=1))
        assert tr.n_samples == 15713
        assert va.n_samples == 827

    def test_deterministic_and_exhaustive(self):
        ds = make_dataset(n=101, classes=7)
        for seed in range(100):
            tr, va = split_train_val(ds, SplitSpec(train_fraction=0.8, seed=seed))
            tr2, va2 = split_train_val(ds, SplitSpec(train_fraction=0.8, seed=seed))
            np.testing.assert_array_equal(tr.segments, tr2.segments)
            assert tr.n_samples + va.n_samples == ds.n_samples
        assert va.split_tag == "val" and tr.split_tag == "train"

    def test_requires_train_tag(self):
        with pytest.raises(ConfigurationError):
            split_train_val(make_dataset(tag="test"), SplitSpec(train_fraction=0.5, seed=0))


class TestSynthetic:
    SMALL = dict(class_count=6, samples_per_class=3, latent_dim=8, seed=3,
                 n_channels=5, n_timepoints=7, feature_dim=12,
                 streams=("blur_k1", "evnet"))

    def test_zero_noise_same_class_identical(self):
        spec = SyntheticSpec(noise_sigma=0.0, **self.SMALL)
        ds, _, _ = generate_synthetic(spec)
        same = ds.segments[ds.labels == 2]
        np.testing.assert_array_equal(same[0], same[1])

    def test_bit_identical_for_identical_spec(self):
        spec = SyntheticSpec(noise_sigma=0.2, **self.SMALL)
        a_ds, a_bank, a_lat = generate_synthetic(spec)
        b_ds, b_bank, b_lat = generate_synthetic(spec)
        np.testing.assert_array_equal(a_ds.segments, b_ds.segments)
        np.testing.assert_array_equal(a_bank.features, b_bank.features)
        np.testing.assert_array_equal(a_lat, b_lat)
        np.testing.assert_array_equal(
            synthetic_eval_set(spec).segments, synthetic_eval_set(spec).segments)

    def test_latent_separation_at_benchmark_scale(self):
        # direct pairwise-cosine scan is the oracle
        z = class_latents(seed=0, class_count=200, latent_dim=64)
        cos = z @ z.T
        np.fill_diagonal(cos, 0.0)
        assert np.abs(cos).max() < 0.9
        np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-12)

    def test_eval_set_differs_from_train_but_same_world(self):
        spec = SyntheticSpec(noise_sigma=0.1, **self.SMALL)
        ds, _, _ = generate_synthetic(spec)
        ev = synthetic_eval_set(spec)
        assert ev.split_tag == "test"
        assert ev.n_samples == spec.class_count
        assert not np.array_equal(ev.segments[0], ds.segments[0])
