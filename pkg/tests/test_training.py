import numpy as np
import pytest

from eegret import rng as erng
from eegret.data import SyntheticSpec, generate_synthetic, synthetic_eval_set
from eegret.encoder import EncoderConfig, ForwardMode, eeg_forward, init_params, visual_forward
from eegret.errors import ConfigurationError, DataError, ParameterError
from eegret.training import (AdamW, EpochStats, RunRecord, TrainConfig,
                             infonce_loss, record_from_csv, record_to_csv,
                             select_checkpoint, train_one)

SMALL_SPEC = SyntheticSpec(class_count=8, samples_per_class=4, latent_dim=8,
                           noise_sigma=0.1, seed=2, n_channels=6, n_timepoints=12,
                           feature_dim=16, streams=("blur_k1", "blur_k3", "evnet"))
SMALL_ENCODER = dict(conv_filters=3, mlp_hidden=8, adapter_hidden=6)


def small_world():
    train_ds, bank, _ = generate_synthetic(SMALL_SPEC)
    test_ds = synthetic_eval_set(SMALL_SPEC)
    return train_ds, bank, test_ds


class TestInfoNce:
    def test_single_pair_loss_is_exactly_zero(self):
        z = np.array([[1.5, -0.3, 2.0]])
        loss, dz, dv = infonce_loss(z, z * 0.7)
        assert loss == 0.0
        np.testing.assert_array_equal(dz, 0.0)
        np.testing.assert_array_equal(dv, 0.0)

    def test_symmetric_in_arguments(self):
        for seed in range(100):
            gen = np.random.default_rng(seed)
            z = gen.standard_normal((5, 7))
            v = gen.standard_normal((5, 7))
            assert abs(infonce_loss(z, v)[0] - infonce_loss(v, z)[0]) < 1e-12

    def test_two_pair_hand_value(self):
        # orthonormal pair: logit matrix [[1,0],[0,1]], each CE = log(1+e^-1)
        z = np.zeros((2, 4))
        z[0, 0] = 1.0
        z[1, 1] = 1.0
        loss, _, _ = infonce_loss(z, z.copy())
        assert abs(loss - 0.3132616875182229) < 1e-4

    def test_loss_nonnegative(self):
        for seed in range(20):
            gen = np.random.default_rng(seed)
            loss, _, _ = infonce_loss(gen.standard_normal((6, 9)) * 3,
                                      gen.standard_normal((6, 9)) * 3)
            assert loss >= 0.0

    @pytest.mark.parametrize("normalize", [False, True])
    def test_gradients_match_finite_differences(self, normalize):
        gen = np.random.default_rng(7)
        z = gen.standard_normal((4, 6))
        v = gen.standard_normal((4, 6))
        _, dz, dv = infonce_loss(z, v, logit_scale=1.0, normalize=normalize)
        h = 1e-3
        for arr, grad in ((z, dz), (v, dv)):
            for i in range(arr.shape[0]):
                for j in range(arr.shape[1]):
                    p, m = arr.copy(), arr.copy()
                    p[i, j] += h
                    m[i, j] -= h
                    if arr is z:
                        fd = (infonce_loss(p, v, 1.0, normalize)[0]
                              - infonce_loss(m, v, 1.0, normalize)[0]) / (2 * h)
                    else:
                        fd = (infonce_loss(z, p, 1.0, normalize)[0]
                              - infonce_loss(z, m, 1.0, normalize)[0]) / (2 * h)
                    rel = abs(grad[i, j] - fd) / max(abs(grad[i, j]), abs(fd), 1e-6)
                    assert rel < 1e-4

    def test_rejects_nonfinite(self):
        z = np.ones((2, 3))
        bad = z.copy()
        bad[0, 0] = np.nan
        with pytest.raises(DataError):
            infonce_loss(z, bad)


class TestAdamW:
    def test_zero_grad_zero_decay_is_identity(self):
        vec = np.random.default_rng(0).standard_normal(50)
        opt = AdamW(np.ones(50, dtype=bool), lr=0.1, weight_decay=0.0)
        before = vec.copy()
        for _ in range(3):
            opt.step(vec, np.zeros(50))
        np.testing.assert_array_equal(vec, before)

    def test_nontrainable_coordinates_never_move(self):
        mask = np.zeros(10, dtype=bool)
        mask[:5] = True
        vec = np.arange(10, dtype=np.float64)
        opt = AdamW(mask, lr=0.05, weight_decay=0.3)
        grad = np.zeros(10)
        grad[:5] = 1.0
        opt.step(vec, grad)
        np.testing.assert_array_equal(vec[5:], np.arange(5, 10, dtype=np.float64))
        assert (vec[:5] != np.arange(5, dtype=np.float64)).all()

    def test_descent_on_fixed_batch(self):
        train_ds, bank, _ = small_world()
        from eegret.features import split_streams
        from eegret.training import default_encoder_config
        blur, evnet = split_streams(bank)
        enc = default_encoder_config(train_ds, bank, **SMALL_ENCODER)
        params = init_params(enc, erng.stream(0, "init"))
        x = train_ds.segments[:8].astype(np.float64)
        lb = train_ds.labels[:8]
        mode = ForwardMode(train=True, dropout_seed=42)

        def loss_with_masks(p):
            z, ec = eeg_forward(p, x, mode, want_cache=True)
            v, vc = visual_forward(p, blur[lb], evnet[lb], mode, want_cache=True)
            return infonce_loss(z, v), ec, vc

        from eegret.encoder import eeg_backward, visual_backward
        (loss0, dz, dv), ec, vc = loss_with_masks(params)
        grad = np.zeros(params.total)
        eeg_backward(params, ec, dz, grad)
        visual_backward(params, vc, dv, grad)
        opt = AdamW(params.trainable_mask(), lr=1e-5, weight_decay=0.0)
        opt.step(params.vec, grad)
        (loss1, _, _), _, _ = loss_with_masks(params)
        assert loss1 < loss0


class TestTrainLoop:
    def test_zero_lr_keeps_parameters(self):
        train_ds, bank, test_ds = small_world()
        cfg = TrainConfig(epochs=2, batch_size=8, lr=0.0, weight_decay=0.0, seeds=(0,))
        from eegret.training import default_encoder_config
        enc = default_encoder_config(train_ds, bank, **SMALL_ENCODER)
        init = init_params(enc, erng.stream(3, "init")).vec.copy()
        res = train_one(train_ds, bank, cfg, 3, test_data=test_ds, encoder_cfg=enc)
        trainable = res.params.trainable_mask()
        np.testing.assert_array_equal(res.params.vec[trainable], init[trainable])

    def test_identical_seed_bit_identical_run(self):
        train_ds, bank, test_ds = small_world()
        cfg = TrainConfig(epochs=3, batch_size=8, seeds=(5,))
        from eegret.training import default_encoder_config
        enc = default_encoder_config(train_ds, bank, **SMALL_ENCODER)
        a = train_one(train_ds, bank, cfg, 5, test_data=test_ds, encoder_cfg=enc)
        b = train_one(train_ds, bank, cfg, 5, test_data=test_ds, encoder_cfg=enc)
        assert record_to_csv(a.record) == record_to_csv(b.record)
        np.testing.assert_array_equal(a.params.vec, b.params.vec)

    def test_shuffle_is_pure_function_of_seed_and_epoch(self):
        a = erng.stream(9, "shuffle", 4).permutation(100)
        b = erng.stream(9, "shuffle", 4).permutation(100)
        c = erng.stream(9, "shuffle", 5).permutation(100)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_val_tracking_and_snapshots(self):
        train_ds, bank, test_ds = small_world()
        from eegret.data import SplitSpec, split_train_val
        tr, va = split_train_val(train_ds, SplitSpec(train_fraction=0.75, seed=0))
        cfg = TrainConfig(epochs=2, batch_size=8, seeds=(0,), selection="val_selected")
        from eegret.training import default_encoder_config
        enc = default_encoder_config(tr, bank, **SMALL_ENCODER)
        res = train_one(tr, bank, cfg, 0, test_data=test_ds, val_data=va, encoder_cfg=enc)
        assert all(e.val_acc is not None for e in res.record.epochs)
        assert {"final_epoch", "val_selected", "best_test_diagnostic"} <= set(res.snapshots)

    def test_misaligned_bank_rejected(self):
        train_ds, bank, _ = small_world()
        small = bank.select(bank.stream_names, list(bank.image_ids[:4]))
        cfg = TrainConfig(epochs=1, batch_size=8, seeds=(0,))
        with pytest.raises(ConfigurationError):
            train_one(train_ds, small, cfg, 0)


class TestSelection:
    @staticmethod
    def record(vals, tops=None):
        rec = RunRecord(seed=0, config_hash="x")
        for i, v in enumerate(vals):
            rec.epochs.append(EpochStats(
                epoch=i, train_loss=1.0, top1=None if tops is None else tops[i],
                top5=None, val_acc=v))
        return rec

    def test_single_epoch_every_policy(self):
        rec = self.record([0.5], tops=[0.5])
        for policy in ("final_epoch", "val_selected", "best_test_diagnostic"):
            assert select_checkpoint(rec, policy) == 0

    def test_increasing_val_selects_last(self):
        rec = self.record([0.1, 0.2, 0.3, 0.4])
        assert select_checkpoint(rec, "val_selected") == 3

    def test_peak_at_three_of_ten(self):
        vals = [0.1, 0.2, 0.5, 0.9, 0.3, 0.2, 0.9, 0.1, 0.0, 0.4]
        assert select_checkpoint(self.record(vals), "val_selected") == 3  # earliest tie

    def test_missing_val_is_configuration_error(self):
        rec = self.record([0.1, None, 0.3])
        with pytest.raises(ConfigurationError):
            select_checkpoint(rec, "val_selected")

    def test_unknown_policy(self):
        with pytest.raises(ParameterError):
            select_checkpoint(self.record([0.1]), "cherry_pick")

    def test_empty_record(self):
        with pytest.raises(ParameterError):
            select_checkpoint(RunRecord(seed=0, config_hash=""), "final_epoch")


class TestRecordCsv:
    def test_round_trip(self):
        rec = RunRecord(seed=4, config_hash="h")
        rec.epochs = [EpochStats(0, 2.5, 0.1, 0.4, None),
                      EpochStats(1, 1.25, 0.2, 0.5, 0.3)]
        text = record_to_csv(rec)
        back = record_from_csv(text)
        assert [e.train_loss for e in back.epochs] == [2.5, 1.25]
        assert back.epochs[0].val_acc is None
        assert back.epochs[1].val_acc == 0.3
        assert record_to_csv(back) == text
