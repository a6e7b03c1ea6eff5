"""Training loop behavior, logit statistics, and checkpoint round-trips."""

import numpy as np
import pytest

from lsrobust import (
    CheckpointError,
    TrainConfig,
    TrainingDivergedError,
    ValidationError,
    forward,
    init_model,
    load_checkpoint,
    logit_range_stats,
    optimal_margin,
    save_checkpoint,
    smoothed_ce_from_margins,
    synth_blobs,
    train,
)
from lsrobust.losses import _ce_smoothed


@pytest.fixture(scope="module")
def blob_data():
    train_set = synth_blobs(4, 200, 16, separation=4.0, seed=0)
    test_set = synth_blobs(4, 100, 16, separation=4.0, seed=1, split="test")
    return train_set, test_set


def weights_equal(a, b):
    return all(np.array_equal(x.weight, y.weight)
               and np.array_equal(x.bias, y.bias)
               for x, y in zip(a.layers, b.layers))


class TestTrain:
    def test_smoothed_reaches_95_percent(self, blob_data):
        train_set, test_set = blob_data
        cfg = TrainConfig(epochs=20, label_mode="smoothed", alpha=0.9,
                          rng_seed=7)
        _, log = train(init_model([16, 32, 4], seed=7), train_set, cfg,
                       test_set)
        assert log[-1].test_acc >= 0.95

    def test_hard_reaches_95_percent(self, blob_data):
        train_set, test_set = blob_data
        cfg = TrainConfig(epochs=20, label_mode="hard", rng_seed=7)
        _, log = train(init_model([16, 32, 4], seed=7), train_set, cfg,
                       test_set)
        assert log[-1].test_acc >= 0.95

    def test_same_seed_bitwise_identical(self, blob_data):
        train_set, _ = blob_data
        cfg = TrainConfig(epochs=5, label_mode="smoothed", alpha=0.5,
                          rng_seed=3)
        m0 = init_model([16, 32, 4], seed=3)
        a, _ = train(m0, train_set, cfg)
        b, _ = train(m0, train_set, cfg)
        assert weights_equal(a, b)

    def test_alpha_zero_equals_hard_bitwise(self, blob_data):
        train_set, _ = blob_data
        m0 = init_model([16, 32, 4], seed=3)
        hard, hard_log = train(m0, train_set,
                               TrainConfig(epochs=5, label_mode="hard",
                                           rng_seed=3))
        smoothed, smooth_log = train(m0, train_set,
                                     TrainConfig(epochs=5,
                                                 label_mode="smoothed",
                                                 alpha=0.0, rng_seed=3))
        assert weights_equal(hard, smoothed)
        assert all(a.loss == b.loss for a, b in zip(hard_log, smooth_log))

    def test_divergence_aborts_with_diagnostic(self, blob_data):
        import warnings

        train_set, _ = blob_data
        cfg = TrainConfig(epochs=5, learning_rate=1e155, label_mode="hard",
                          rng_seed=0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            with pytest.raises(TrainingDivergedError):
                train(init_model([16, 32, 4], seed=0), train_set, cfg)

    def test_empty_dataset_rejected(self, blob_data):
        train_set, _ = blob_data
        empty = train_set.take(np.array([], dtype=np.int64))
        with pytest.raises(ValidationError):
            train(init_model([16, 32, 4], seed=0), empty, TrainConfig())

    def test_adversarial_mode_respects_eps_ball(self, blob_data):
        train_set, _ = blob_data
        cfg = TrainConfig(epochs=2, label_mode="adversarial", adv_eps=0.1,
                          rng_seed=1)
        _, log = train(init_model([16, 16, 4], seed=1), train_set, cfg)
        for record in log:
            assert record.max_inner_perturbation <= 0.1 + 1e-9
            assert record.max_inner_perturbation > 0.0

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValidationError):
            TrainConfig(epochs=0)
        with pytest.raises(ValidationError):
            TrainConfig(label_mode="smoothed", alpha=1.2)
        with pytest.raises(ValidationError):
            TrainConfig(label_mode="nope")


class TestSmoothedLossBound:
    def test_loss_bounded_below_by_symmetric_minimum(self, blob_data):
        # the margin-form smoothed CE is convex in the margins, so its
        # global minimum sits at the symmetric stationary margin
        train_set, test_set = blob_data
        alpha, K = 0.5, 4
        cfg = TrainConfig(epochs=30, label_mode="smoothed", alpha=alpha,
                          rng_seed=7)
        model, _ = train(init_model([16, 32, 4], seed=7), train_set, cfg)
        m_star = optimal_margin(alpha, K)
        floor = (alpha / K) * (K - 1) * m_star \
            + np.log(1 + (K - 1) * np.exp(-m_star))
        assert abs(floor - smoothed_ce_from_margins(
            np.full(K - 1, m_star), alpha)) < 1e-12
        Z = forward(model, test_set.X)
        losses, _ = _ce_smoothed(Z, test_set.y, alpha)
        assert losses.min() >= floor - 1e-6


class TestLogitRangeStats:
    def test_zero_model_gives_zero_range(self, blob_data):
        train_set, _ = blob_data
        from lsrobust import DenseLayer, Model
        model = Model((DenseLayer(np.zeros((4, 16)), np.zeros(4),
                                  "identity"),))
        st = logit_range_stats(model, train_set)
        assert st.logit_min == 0.0 and st.logit_max == 0.0
        assert st.width == 0.0

    def test_width_decreasing_and_margin_law(self, blob_data):
        train_set, _ = blob_data
        widths = []
        for alpha in (0.3, 0.6, 0.9):
            cfg = TrainConfig(epochs=40, label_mode="smoothed", alpha=alpha,
                              rng_seed=7)
            model, _ = train(init_model([16, 32, 4], seed=7), train_set, cfg)
            st = logit_range_stats(model, train_set)
            widths.append(st.width)
            m_star = optimal_margin(alpha, 4)
            assert abs(st.mean_margin - m_star) <= 0.3 * m_star
        assert widths[0] > widths[1] > widths[2]

    def test_empty_dataset_rejected(self, blob_data):
        train_set, _ = blob_data
        model = init_model([16, 4], seed=0)
        with pytest.raises(ValidationError):
            logit_range_stats(model, train_set.take(np.array([], dtype=np.int64)))


class TestCheckpoint:
    def test_round_trip_identical_logits(self, tmp_path, blob_data):
        train_set, _ = blob_data
        cfg = TrainConfig(epochs=3, label_mode="smoothed", alpha=0.7,
                          rng_seed=2)
        model, log = train(init_model([16, 24, 4], seed=2), train_set, cfg)
        meta = {"label_mode": "smoothed", "alpha": 0.7, "seed": 2,
                "train_acc": log[-1].train_acc}
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, meta, path)
        ckpt = load_checkpoint(path)
        assert ckpt.meta["alpha"] == 0.7
        X = np.random.default_rng(0).uniform(0, 1, (100, 16))
        assert np.array_equal(forward(model, X), forward(ckpt.model, X))

    def test_corrupted_payload_rejected(self, tmp_path):
        model = init_model([4, 3], seed=0)
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, {}, path)
        blob = bytearray(path.read_bytes())
        blob[-10] ^= 0x55
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="checksum"):
            load_checkpoint(path)

    def test_future_version_rejected(self, tmp_path):
        import struct
        import zlib

        model = init_model([4, 3], seed=0)
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, {}, path)
        blob = bytearray(path.read_bytes())
        struct.pack_into("<I", blob, 12, 42)
        body = bytes(blob[:-4])
        path.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"definitely not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
