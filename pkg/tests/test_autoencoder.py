import numpy as np
import numpy.testing as npt
import pytest
from scipy.optimize import minimize

from logad.autoencoder import (
    AeConfig,
    AutoencoderParams,
    _backward_batch,
    _batch_loss,
    _forward_batch,
    ae_extract,
    ae_forward,
    ae_loss,
    ae_train,
    load_autoencoder,
    normalize_input,
    save_autoencoder,
)
from logad.ingest import TokenSequence
from logad.numerics import grad_check, make_rng


def tiny_params(length=4, vocab_size=9, hidden=(3, 2, 2), seed=0, l1_coeff=0.0):
    return AutoencoderParams.init(make_rng(seed), length, vocab_size, hidden, l1_coeff)


class TestForward:
    def test_zero_weights_give_uniform_output(self):
        params = tiny_params()
        for arr in params.arrays.values():
            arr[:] = 0.0
        out, _ = ae_forward(params, np.array([3, 1, 2, 0]))
        npt.assert_allclose(out, np.full(4, 0.25), atol=1e-15)

    def test_inference_deterministic(self):
        params = tiny_params(seed=3)
        seq = TokenSequence(np.array([2, 5, 1, 4]), 1)
        a, _ = ae_forward(params, seq)
        b, _ = ae_forward(params, seq)
        npt.assert_array_equal(a, b)

    def test_all_padding_rejected(self):
        params = tiny_params()
        with pytest.raises(ValueError):
            ae_forward(params, np.zeros(4, dtype=np.int64))

    def test_hand_computed_toy(self):
        # L=4, hidden (3,2,2): transcribe the four dense layers directly
        params = tiny_params()
        a = params.arrays
        a["W1"][:] = 0.1
        a["b1"][:] = [0.0, 0.1, -0.1]
        a["W2"][:] = [[0.2, -0.2], [0.1, 0.1], [0.0, 0.3]]
        a["b2"][:] = 0.05
        a["W3"][:] = [[0.5, 0.0], [-0.5, 0.25]]
        a["b3"][:] = [0.0, -0.05]
        a["W4"][:] = [[0.3, -0.3, 0.1, 0.0], [0.2, 0.2, -0.1, 0.4]]
        a["b4"][:] = [0.01, 0.02, 0.03, 0.04]

        indices = np.array([3, 1, 2, 0])
        t = indices / 9 / np.sum(indices / 9)
        h1 = np.tanh(t @ a["W1"] + a["b1"])
        h2 = np.tanh(h1 @ a["W2"] + a["b2"])
        h3 = np.tanh(h2 @ a["W3"] + a["b3"])
        z = h3 @ a["W4"] + a["b4"]
        expected = np.exp(z - z.max())
        expected /= expected.sum()

        out, _ = ae_forward(params, indices)
        npt.assert_allclose(out, expected, atol=1e-12)

    def test_dropout_noop_in_inference(self):
        params = tiny_params(seed=5)
        x = np.array([1, 2, 3, 4])
        base, _ = ae_forward(params, x)
        dropped, _ = ae_forward(params, x, train_mode=False, rng=make_rng(0), dropout=0.8)
        npt.assert_array_equal(base, dropped)

    def test_dropout_masks_use_inverted_scaling(self):
        params = tiny_params(seed=5)
        t, _ = normalize_input(np.array([[1, 2, 3, 4]]), 9)
        _, cache = _forward_batch(params, t, dropout=0.8, train_mode=True, rng=make_rng(1))
        for mask in cache["masks"]:
            values = np.unique(mask)
            assert set(np.round(values, 12)) <= {0.0, round(1 / 0.2, 12)}


class TestLoss:
    def test_matched_uniform_pair(self):
        assert ae_loss([0.5, 0.5], [0.5, 0.5], l1_coeff=0.0) == pytest.approx(np.log(2), abs=1e-12)

    def test_monotone_in_matching_mass(self):
        t = np.array([0.0, 1.0, 0.0])
        losses = [ae_loss(t, p) for p in ([0.3, 0.4, 0.3], [0.2, 0.6, 0.2], [0.05, 0.9, 0.05])]
        assert losses[0] > losses[1] > losses[2]

    def test_l1_penalty_linear(self):
        params = tiny_params(seed=2)
        t = p = np.full(4, 0.25)
        base = ae_loss(t, p, params, l1_coeff=0.0)
        one = ae_loss(t, p, params, l1_coeff=0.01) - base
        two = ae_loss(t, p, params, l1_coeff=0.02) - base
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_log_floor_keeps_loss_finite(self):
        assert np.isfinite(ae_loss([1.0, 0.0], [0.0, 1.0]))


class TestGradients:
    @pytest.mark.parametrize("seed", [0, 1])
    def test_backward_matches_finite_differences(self, seed):
        rng = make_rng(seed)
        params = AutoencoderParams.init(rng, 6, 20, (5, 3, 3), l1_coeff=0.01)
        indices = rng.integers(1, 21, size=(2, 6))
        t, _ = normalize_input(indices, 20)

        def run(_arrays):
            _, cache = _forward_batch(params, t, dropout=0.8, train_mode=True, rng=make_rng(77))
            return _batch_loss(params, cache, params.l1_coeff)

        _, cache = _forward_batch(params, t, dropout=0.8, train_mode=True, rng=make_rng(77))
        grads = _backward_batch(params, cache, params.l1_coeff)
        report = grad_check(run, grads, params.arrays, step=1e-5, rel_tol=1e-4)
        assert report.passed, str(report)

    def test_backward_without_dropout(self):
        rng = make_rng(9)
        params = AutoencoderParams.init(rng, 6, 20, (5, 3, 3), l1_coeff=0.0)
        indices = rng.integers(1, 21, size=(3, 6))
        t, _ = normalize_input(indices, 20)

        def run(_arrays):
            _, cache = _forward_batch(params, t)
            return _batch_loss(params, cache, 0.0)

        _, cache = _forward_batch(params, t)
        grads = _backward_batch(params, cache, 0.0)
        report = grad_check(run, grads, params.arrays, step=1e-5, rel_tol=1e-4)
        assert report.passed, str(report)


class TestTraining:
    def test_reaches_minimum_achievable_loss_on_constant_data(self):
        # 200 copies of one full-support sequence; the best reachable CCE is
        # found independently by direct optimization over the output logits.
        seq = TokenSequence(np.array([3, 1, 2, 5, 4, 1]), 1)
        data = [TokenSequence(seq.indices.copy(), 1) for _ in range(200)]
        t, _ = normalize_input(seq.indices[None, :], 5)
        t = t[0]

        def cce_of_logits(z):
            p = np.exp(z - z.max())
            p /= p.sum()
            return -np.sum(t * np.log(p))

        oracle = minimize(cce_of_logits, np.zeros(6), method="BFGS").fun

        config = AeConfig(batch_size=64, max_epochs=800, dropout=0.0, patience=50,
                          validation_fraction=0.1, learning_rate=0.05, l1_coeff=0.0,
                          hidden=(5, 3, 3), seed=13)
        params, log = ae_train(data, config, vocab_size=5)
        assert log[-1]["best_val_loss"] <= oracle + 1e-3

    def test_patience_zero_stops_at_first_non_improvement(self):
        rng = make_rng(4)
        data = [TokenSequence(rng.integers(1, 8, size=6), 1) for _ in range(40)]
        config = AeConfig(batch_size=8, max_epochs=200, dropout=0.5, patience=0,
                          validation_fraction=0.2, learning_rate=0.01, hidden=(4, 3, 3), seed=1)
        _, log = ae_train(data, config, vocab_size=7)
        val = [entry["val_loss"] for entry in log]
        assert len(log) < 200
        # the run ends exactly one epoch after the last improvement
        assert val[-1] >= min(val[:-1])

    def test_same_seed_identical_params(self):
        rng = make_rng(8)
        data = [TokenSequence(rng.integers(1, 10, size=5), 0) for _ in range(30)]
        config = AeConfig(batch_size=16, max_epochs=10, dropout=0.3, patience=3,
                          hidden=(4, 2, 2), seed=21)
        a, _ = ae_train(data, config, vocab_size=9)
        b, _ = ae_train(data, config, vocab_size=9)
        for name in a.arrays:
            npt.assert_array_equal(a.arrays[name], b.arrays[name])

    def test_best_so_far_column_non_increasing(self):
        rng = make_rng(2)
        data = [TokenSequence(rng.integers(1, 10, size=5), 1) for _ in range(50)]
        config = AeConfig(batch_size=16, max_epochs=15, dropout=0.2, patience=15,
                          hidden=(4, 2, 2), seed=3)
        _, log = ae_train(data, config, vocab_size=9)
        best = [entry["best_val_loss"] for entry in log]
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))


class TestExtract:
    def test_output_length_matches_input(self):
        params = tiny_params(seed=1)
        rng = make_rng(0)
        inputs = [TokenSequence(rng.integers(1, 9, size=4), 1) for _ in range(5)]
        features = ae_extract(params, inputs, class_label=1)
        assert len(features) == 5
        for feat in features:
            assert feat.values.shape == (4,)
            assert feat.label == 1

    def test_uniform_output_rescales_to_constant(self):
        params = tiny_params()
        for arr in params.arrays.values():
            arr[:] = 0.0
        indices = np.array([[2, 4, 1, 2]])
        features = ae_extract(params, indices, class_label=0)
        s = indices.sum() / 9
        npt.assert_allclose(features[0].values, np.full(4, 0.25 * s * 9), atol=1e-12)

    def test_rescaled_values_match_hand_computation(self):
        params = tiny_params(seed=6)
        indices = np.array([[3, 1, 2, 4]])
        p, _ = ae_forward(params, indices[0])
        s = (indices[0] / 9).sum()
        features = ae_extract(params, indices, class_label=1)
        npt.assert_allclose(features[0].values, p * s * 9, atol=1e-12)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        params = tiny_params(seed=10, l1_coeff=0.02)
        path = tmp_path / "ae.ckpt"
        save_autoencoder(str(path), params, config_hash="deadbeef")
        loaded, config_hash = load_autoencoder(str(path))
        assert config_hash == "deadbeef"
        assert loaded.length == params.length
        assert loaded.vocab_size == params.vocab_size
        assert loaded.l1_coeff == params.l1_coeff
        for name in params.arrays:
            npt.assert_array_equal(loaded.arrays[name], params.arrays[name])

    def test_wrong_kind_rejected(self, tmp_path):
        from logad.storage import save_checkpoint

        path = tmp_path / "x.ckpt"
        save_checkpoint(str(path), "classifier", {"w": np.zeros(2)}, {})
        with pytest.raises(ValueError):
            load_autoencoder(str(path))
