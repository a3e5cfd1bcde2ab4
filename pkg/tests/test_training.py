import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mosnet.checkpoint import (ArchitectureMismatchError, ChecksumError, CheckpointError,
                               VersionError, _checksum, encode, load_checkpoint, load_into,
                               save_checkpoint)
from mosnet.models import ModelConfig, MosPrediction, build_model, forward_mos, predict_many
from mosnet.training import (Dataset, EarlyStopping, TrainingConfig, TrainingDivergedError,
                             evaluate_objective, make_batches, mosnet_loss, mosnet_objective,
                             similarity_loss, train, utterance_mse)

from helpers import objective_by_summation

TINY = ModelConfig("cnn-blstm", (2, 2, 2, 4), blstm_hidden=3, fc_hidden=4)


def pred(frames, valid_len=None):
    frames = np.asarray(frames, dtype=np.float64)
    valid_len = frames.size if valid_len is None else valid_len
    return MosPrediction(frames, float(frames[:valid_len].mean()), valid_len)


def toy_dataset(n=6, seed=0, n_bins=257):
    rng = np.random.default_rng(seed)
    specs = [rng.random((int(rng.integers(3, 12)), n_bins)).astype(np.float32) for _ in range(n)]
    return Dataset(specs, rng.uniform(1, 5, n))


class TestLoss:
    def test_exact_fit_is_zero(self):
        assert mosnet_loss([pred([3.0, 3.0, 3.0])], [3.0]) == 0.0

    def test_worked_example(self):
        assert mosnet_loss([pred([2.0, 4.0])], [3.0], alpha=1.0) == 1.0

    def test_worked_example_alpha_zero(self):
        assert mosnet_loss([pred([2.0, 4.0])], [3.0], alpha=0.0) == 0.0

    def test_padding_ignored(self):
        assert mosnet_loss([pred([2.0, 4.0, 99.0], valid_len=2)], [3.0]) == 1.0

    def test_errors(self):
        with pytest.raises(ValueError):
            mosnet_loss([], [])
        with pytest.raises(ValueError):
            mosnet_loss([pred([1.0])], [1.0, 2.0])

    @given(st.lists(st.lists(st.floats(-5, 10), min_size=1, max_size=6), min_size=1, max_size=4),
           st.floats(0, 3))
    @settings(max_examples=60, deadline=None)
    def test_non_negative_and_matches_summation(self, frames, alpha):
        rng = np.random.default_rng(len(frames))
        targets = rng.uniform(1, 5, len(frames))
        preds = [pred(f) for f in frames]
        value = mosnet_loss(preds, targets, alpha)
        assert value >= 0
        assert value == pytest.approx(objective_by_summation(frames, targets, alpha), abs=1e-9)

    def test_zero_iff_all_frames_equal_truth(self):
        assert mosnet_loss([pred([2.0, 2.0]), pred([4.0])], [2.0, 4.0], 0.5) == 0
        assert mosnet_loss([pred([2.0, 2.0 + 1e-6]), pred([4.0])], [2.0, 4.0], 0.5) > 0


class TestObjective:
    def test_matches_list_form(self):
        rng = np.random.default_rng(0)
        lengths = np.array([3, 7, 5])
        q = rng.standard_normal((3, 7))
        targets = rng.uniform(1, 5, 3)
        o, _ = mosnet_objective(q, lengths, targets, 0.7)
        preds = [pred(q[k], lengths[k]) for k in range(3)]
        assert o == pytest.approx(mosnet_loss(preds, targets, 0.7), abs=1e-12)

    def test_gradient_by_finite_differences(self):
        rng = np.random.default_rng(1)
        lengths = np.array([4, 2])
        q = rng.standard_normal((2, 4))
        t = rng.uniform(1, 5, 2)
        _, grad = mosnet_objective(q, lengths, t, 1.3)
        num = np.zeros_like(q)
        for idx in np.ndindex(q.shape):
            up, down = q.copy(), q.copy()
            up[idx] += 1e-6
            down[idx] -= 1e-6
            num[idx] = (mosnet_objective(up, lengths, t, 1.3)[0]
                        - mosnet_objective(down, lengths, t, 1.3)[0]) / 2e-6
        np.testing.assert_allclose(grad, num, atol=1e-8)
        assert np.all(grad[1, 2:] == 0)

    def test_batch_equals_mean_of_individual(self):
        rng = np.random.default_rng(2)
        lengths = np.array([10, 25, 4])
        q = rng.standard_normal((3, 25))
        t = rng.uniform(1, 5, 3)
        o, _ = mosnet_objective(q, lengths, t)
        single = [mosnet_objective(q[k:k + 1, :lengths[k]], lengths[k:k + 1], t[k:k + 1])[0]
                  for k in range(3)]
        assert o == pytest.approx(np.mean(single), abs=1e-12)

    @pytest.mark.parametrize("pad", [0, 10, 100])
    def test_padding_invariance_frozen_model(self, pad):
        model = build_model(TINY, seed=0)
        x = np.random.default_rng(3).random((20, 257)).astype(np.float32)
        ref = mosnet_loss([forward_mos(model, x)], [3.5])
        padded = np.concatenate([x, np.zeros((pad, 257), np.float32)])
        value = mosnet_loss([forward_mos(model, padded, valid_len=20)], [3.5])
        assert value == pytest.approx(ref, abs=1e-6)


class TestBatching:
    def test_batch_size_one_never_pads(self):
        ds = toy_dataset(5)
        for b in make_batches(ds, 1, np.random.default_rng(0)):
            assert b.x.shape[1] == b.lengths[0]

    def test_max_rule(self):
        ds = Dataset([np.ones((10, 3)), np.ones((25, 3))], [1.0, 2.0])
        (b,) = make_batches(ds, 2, shuffle=False)
        assert b.x.shape == (2, 25, 3)
        assert b.lengths.tolist() == [10, 25]

    def test_covers_dataset_once(self):
        ds = toy_dataset(11)
        batches = make_batches(ds, 4, np.random.default_rng(1))
        seen = np.concatenate([b.index for b in batches])
        assert sorted(seen.tolist()) == list(range(11))

    def test_shuffle_depends_on_rng(self):
        ds = toy_dataset(20)
        a = make_batches(ds, 20, np.random.default_rng(1))[0].index
        b = make_batches(ds, 20, np.random.default_rng(2))[0].index
        assert not np.array_equal(a, b)


class TestEarlyStopping:
    def test_worked_sequence(self):
        stopper = EarlyStopping(5)
        seq = [.5, .4, .41, .42, .43, .44, .45]
        stops = [stopper.update(v) for v in seq]
        assert stops == [False] * 6 + [True]
        assert stopper.best_epoch == 2

    def test_equal_value_is_not_improvement(self):
        stopper = EarlyStopping(2)
        assert not stopper.update(1.0)
        assert not stopper.update(1.0)
        assert stopper.update(1.0)

    def test_strictly_decreasing_never_stops(self):
        stopper = EarlyStopping(1)
        assert not any(stopper.update(1.0 / k) for k in range(1, 50))


class TestTrain:
    def test_max_epochs_stop_reason(self):
        ds = toy_dataset(4)
        model = build_model(TINY, seed=0)
        _, hist = train(model, ds, ds, TrainingConfig(batch_size=2, max_epochs=3,
                                                      learning_rate=1e-3, patience_epochs=10))
        assert hist.stop_reason == "max_epochs"
        assert len(hist.records) == 3

    def test_restores_best_weights(self):
        ds = toy_dataset(4, seed=1)
        model = build_model(TINY, seed=0)
        model, hist = train(model, ds, ds, TrainingConfig(batch_size=2, max_epochs=8,
                                                          learning_rate=3e-2, patience_epochs=2))
        best = min(r.val_mse for r in hist.records)
        assert hist.records[hist.best_epoch - 1].val_mse == best
        assert utterance_mse(model, ds) == pytest.approx(best, rel=1e-12, abs=0)

    def test_deterministic(self, tmp_path):
        ds = toy_dataset(5)
        cfg = TrainingConfig(batch_size=2, max_epochs=2, learning_rate=1e-3)
        runs = []
        for k in range(2):
            _, hist = train(build_model(TINY, seed=0), ds, ds, cfg)
            hist.to_csv(tmp_path / f"h{k}.csv")
            runs.append((tmp_path / f"h{k}.csv").read_text())
        assert runs[0] == runs[1]

    def test_loss_decreases(self):
        ds = toy_dataset(4, seed=2)
        model = build_model(TINY, seed=0)
        before = evaluate_objective(model, ds)
        model, _ = train(model, ds, ds, TrainingConfig(batch_size=1, max_epochs=15,
                                                       learning_rate=1e-3, patience_epochs=15))
        assert evaluate_objective(model, ds) < before

    def test_divergence_detected(self):
        ds = toy_dataset(2)
        ds.targets[0] = np.inf
        with pytest.raises(TrainingDivergedError):
            train(build_model(TINY, seed=0), ds, ds, TrainingConfig(max_epochs=1))

    def test_unmasked_mode_sees_padding(self):
        rng = np.random.default_rng(4)
        ds = Dataset([rng.random((3, 257)), rng.random((30, 257))], [2.0, 4.0])
        masked = train(build_model(TINY, seed=0), ds, ds,
                       TrainingConfig(batch_size=2, max_epochs=1, learning_rate=1e-3))[0]
        unmasked = train(build_model(TINY, seed=0), ds, ds,
                         TrainingConfig(batch_size=2, max_epochs=1, learning_rate=1e-3,
                                        mask_padding=False))[0]
        a = masked.state_dict()
        b = unmasked.state_dict()
        assert any(not np.array_equal(a[k], b[k]) for k in a)

    @pytest.mark.parametrize("kw", [dict(alpha=-1), dict(batch_size=0), dict(learning_rate=0)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            TrainingConfig(**kw)


class TestSimilarityLoss:
    def test_scalar_gradient(self):
        out = np.array([0.2, 0.9])
        loss, grad = similarity_loss(out, np.array([0, 1]), "scalar")
        assert loss == pytest.approx((0.04 + 0.01) / 2)
        np.testing.assert_allclose(grad, [0.2, -0.1])

    def test_cross_entropy(self):
        out = np.array([[0.25, 0.75], [0.5, 0.5]])
        loss, grad = similarity_loss(out, np.array([1, 0]), "2class")
        assert loss == pytest.approx(-(np.log(0.75) + np.log(0.5)) / 2)
        assert grad[0, 0] == 0 and grad[0, 1] == pytest.approx(-1 / (2 * 0.75))


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        model = build_model(TINY, seed=3)
        x = np.random.default_rng(0).random((13, 257))
        before = forward_mos(model, x).frame_scores
        save_checkpoint(model, tmp_path / "m.ckpt")
        loaded = load_checkpoint(tmp_path / "m.ckpt")
        assert loaded.config == TINY
        np.testing.assert_array_equal(forward_mos(loaded, x).frame_scores, before)

    def test_encoding_deterministic(self):
        assert encode(build_model(TINY, seed=1)) == encode(build_model(TINY, seed=1))

    def test_mismatched_architecture(self, tmp_path):
        save_checkpoint(build_model(TINY), tmp_path / "m.ckpt")
        other = build_model(ModelConfig("cnn", (2, 2, 2, 4), fc_hidden=4))
        with pytest.raises(ArchitectureMismatchError):
            load_into(other, tmp_path / "m.ckpt")

    @pytest.mark.parametrize("cut", [1, 100, 1000])
    def test_truncated(self, tmp_path, cut):
        save_checkpoint(build_model(TINY), tmp_path / "m.ckpt")
        blob = (tmp_path / "m.ckpt").read_bytes()
        (tmp_path / "t.ckpt").write_bytes(blob[:-cut])
        with pytest.raises(ChecksumError):
            load_checkpoint(tmp_path / "t.ckpt")

    def test_bit_flip(self, tmp_path):
        blob = bytearray(encode(build_model(TINY)))
        blob[len(blob) // 2] ^= 0x01
        (tmp_path / "f.ckpt").write_bytes(bytes(blob))
        with pytest.raises(ChecksumError):
            load_checkpoint(tmp_path / "f.ckpt")

    def test_version_mismatch(self, tmp_path):
        blob = bytearray(encode(build_model(TINY)))[:-8]
        blob[8:12] = struct.pack("<I", 99)
        payload = bytes(blob)
        (tmp_path / "v.ckpt").write_bytes(payload + _checksum(payload))
        with pytest.raises(VersionError):
            load_checkpoint(tmp_path / "v.ckpt")

    def test_not_a_checkpoint(self, tmp_path):
        payload = b"X" * 40
        (tmp_path / "x.ckpt").write_bytes(payload + _checksum(payload))
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "x.ckpt")

    def test_similarity_model_round_trip(self, tmp_path):
        cfg = ModelConfig("similarity-2class", (2, 2, 2, 4), fc_hidden=4)
        model = build_model(cfg, seed=2)
        save_checkpoint(model, tmp_path / "s.ckpt")
        loaded = load_checkpoint(tmp_path / "s.ckpt")
        for k, v in model.state_dict().items():
            np.testing.assert_array_equal(loaded.state_dict()[k], v)
