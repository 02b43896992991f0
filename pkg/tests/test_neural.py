import numpy as np
import pytest

from conftest import central_diff, relative_error
from strokeguess.neural import (Adagrad, CheckpointError, ClassWeights, LossConfig,
                                LstmParams, NeuralError, OptimizerConfig,
                                compute_loss, init_lstm_params, load_checkpoint,
                                lstm_backward, lstm_forward, lstm_step,
                                orthogonal_init, ranking_loss, save_checkpoint,
                                transition_weights, weighted_bce)


class TestOrthogonalInit:
    def test_square_orthogonality(self):
        m = orthogonal_init(6, 6, gain=1.1, seed=0)
        assert np.allclose(m.T @ m, 1.1 ** 2 * np.eye(6), atol=1e-6)

    def test_deterministic(self):
        assert np.array_equal(orthogonal_init(5, 3, seed=42),
                              orthogonal_init(5, 3, seed=42))

    def test_tall_columns_orthonormal(self):
        m = orthogonal_init(4, 2, gain=1.1, seed=1)
        assert np.allclose(m.T @ m, 1.1 ** 2 * np.eye(2), atol=1e-6)

    def test_wide_rows_orthonormal(self):
        m = orthogonal_init(2, 4, gain=1.0, seed=1)
        assert np.allclose(m @ m.T, np.eye(2), atol=1e-6)

    def test_bad_shape(self):
        with pytest.raises(NeuralError):
            orthogonal_init(0, 3)


class TestLstmForward:
    def zero_params(self, d=3, h=4, o=2, forget_bias=1.0):
        params = init_lstm_params(d, h, o, seed=0)
        for t in params.tensors().values():
            t[...] = 0.0
        params.b[h:2 * h] = forget_bias
        return params

    def test_zero_weights_zero_input(self):
        params = self.zero_params()
        hs, ys = lstm_forward(params, np.zeros((5, 3)))
        assert not hs.any() and not ys.any()

    def test_output_shapes(self):
        params = init_lstm_params(3, 4, 2, seed=1)
        hs, ys = lstm_forward(params, np.random.default_rng(0).standard_normal((7, 3)))
        assert hs.shape == (7, 4) and ys.shape == (7, 2)

    def test_single_step_equals_stateless_cell(self):
        params = init_lstm_params(3, 4, 2, seed=2)
        x = np.random.default_rng(1).standard_normal(3)
        h, c, y, _, _ = lstm_step(params, x, np.zeros(4), np.zeros(4))
        hs, ys = lstm_forward(params, x[None, :])
        assert np.array_equal(hs[0], h) and np.array_equal(ys[0], y)

    def test_dimension_mismatch(self):
        params = init_lstm_params(3, 4, 2, seed=0)
        with pytest.raises(NeuralError):
            lstm_forward(params, np.zeros((2, 5)))

    def test_nonfinite_input(self):
        params = init_lstm_params(3, 4, 2, seed=0)
        with pytest.raises(NeuralError):
            lstm_forward(params, np.full((2, 3), np.nan))

    def test_forget_gate_carries_state(self):
        params = self.zero_params(forget_bias=10.0)
        # drive c to a nonzero value via the input path, then watch it persist
        params.wx[:, :4] = 1.0   # input gate
        params.wx[:, 8:12] = 1.0  # cell candidate
        xs = np.vstack([np.ones(3), np.zeros((4, 3))])
        hs, _ = lstm_forward(params, xs)
        assert abs(hs[-1]).max() > 0.0


class TestLosses:
    def test_mse_value_and_grad(self):
        p, g = np.array([1.0, 2.0]), np.array([0.0, 0.0])
        loss, grad = compute_loss(LossConfig(kind="MSE"), p, g)
        assert loss == pytest.approx(5.0)
        assert np.allclose(grad, [2.0, 4.0])

    def test_cosine_aligned_zero(self):
        p = np.array([0.3, 0.4])
        loss, _ = compute_loss(LossConfig(kind="COSINE"), p, p)
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_cosine_scale_invariance(self):
        rng = np.random.default_rng(3)
        cfg = LossConfig(kind="COSINE")
        for _ in range(20):
            p, g = rng.standard_normal(6), rng.standard_normal(6)
            c = float(rng.uniform(0.1, 10.0))
            assert compute_loss(cfg, c * p, g)[0] == pytest.approx(
                compute_loss(cfg, p, g)[0])

    def test_hinge_aligned_positive(self):
        p = np.array([1.0, 0.0])
        h = np.array([0.0, 1.0])
        loss, grad = compute_loss(LossConfig(kind="HINGE_RANK"), p, p, h)
        assert loss == 0.0 and not grad.any()

    def test_hinge_adversarial_negative(self):
        p = np.array([1.0, 0.0])
        g = np.array([0.0, 1.0])
        loss, _ = compute_loss(LossConfig(kind="HINGE_RANK"), p, g, p)
        assert loss == pytest.approx(1.1)

    def test_convex_is_sum_of_parts(self):
        rng = np.random.default_rng(5)
        p, g, h = rng.standard_normal((3, 7))
        closs, _ = compute_loss(LossConfig(kind="COSINE"), p, g)
        hloss, _ = compute_loss(LossConfig(kind="HINGE_RANK"), p, g, h)
        total, _ = compute_loss(LossConfig(kind="CONVEX", lam=1.0), p, g, h)
        assert total == pytest.approx(closs + hloss)

    def test_zero_norm_rejected(self):
        with pytest.raises(NeuralError):
            compute_loss(LossConfig(kind="COSINE"), np.zeros(3), np.ones(3))

    def test_hinge_needs_negative(self):
        with pytest.raises(NeuralError):
            compute_loss(LossConfig(kind="HINGE_RANK"), np.ones(3), np.ones(3))

    def test_negative_must_differ(self):
        g = np.array([1.0, 0.0])
        with pytest.raises(NeuralError):
            compute_loss(LossConfig(kind="HINGE_RANK"), np.ones(2), g, 2.0 * g)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(6)
        for kind in ("MSE", "COSINE", "HINGE_RANK", "CONVEX"):
            cfg = LossConfig(kind=kind)
            p, g, h = rng.standard_normal((3, 5))
            _, grad = compute_loss(cfg, p, g, h)
            numeric = central_diff(lambda v: compute_loss(cfg, v, g, h)[0], p)
            assert relative_error(grad, numeric) < 1e-6


class TestClassWeights:
    def test_reported_fractions(self):
        w = ClassWeights.from_fractions(0.339, 0.661)
        assert w.w0 == pytest.approx(1.475, abs=1e-3)
        assert w.w1 == pytest.approx(0.756, abs=1e-3)

    def test_balanced(self):
        w = ClassWeights.from_fractions(0.5, 0.5)
        assert w.w0 == 1.0 and w.w1 == 1.0

    def test_counts(self):
        w = ClassWeights.from_counts(339, 661)
        assert w.w0 == pytest.approx(0.5 / 0.339, abs=1e-9)

    def test_weight_times_fraction_is_half(self):
        w = ClassWeights.from_fractions(0.2, 0.8)
        assert w.w0 * 0.2 == pytest.approx(0.5)
        assert w.w1 * 0.8 == pytest.approx(0.5)


class TestWeightedBce:
    def test_perfect_prediction(self):
        w = ClassWeights.from_fractions(0.5, 0.5)
        loss, _ = weighted_bce(1.0 - 1e-12, 1, w)
        assert loss == pytest.approx(0.0, abs=1e-9)

    def test_out_of_range(self):
        w = ClassWeights.from_fractions(0.5, 0.5)
        with pytest.raises(NeuralError):
            weighted_bce(1.2, 1, w)

    def test_gradient(self):
        w = ClassWeights.from_fractions(0.3, 0.7)
        for label in (0, 1):
            _, grad = weighted_bce(0.42, label, w)
            numeric = (weighted_bce(0.42 + 1e-7, label, w)[0]
                       - weighted_bce(0.42 - 1e-7, label, w)[0]) / 2e-7
            assert grad == pytest.approx(numeric, rel=1e-5)


class TestTransitionWeights:
    def test_peak_is_one(self):
        w = transition_weights(3, 10, 7.0)
        assert w[3] == 1.0

    def test_derived_value(self):
        w = transition_weights(1, 5, 7.0)
        assert w[0] == pytest.approx(np.exp(-3.5), abs=1e-12)

    def test_strictly_unimodal(self):
        for alpha in (5.0, 7.0, 10.0):
            for n in (1, 2, 5, 17):
                for k in range(n):
                    w = transition_weights(k, n, alpha)
                    left = w[:k + 1]
                    right = w[k:]
                    assert np.all(np.diff(left) > 0) or left.size <= 1
                    assert np.all(np.diff(right) < 0) or right.size <= 1

    def test_invalid_inputs(self):
        with pytest.raises(NeuralError):
            transition_weights(5, 5, 7.0)
        with pytest.raises(NeuralError):
            transition_weights(0, 5, 0.0)


class TestRankingLoss:
    def test_monotone_scores_no_rank_loss(self):
        # scores non-decreasing inside each phase (the max resets at step 4)
        scores = np.array([0.2, 0.5, 0.9, 0.4, 0.6, 0.9])
        labels = np.array([0, 0, 0, 1, 1, 1])
        _, _, breakdown = ranking_loss(scores, labels)
        non_transition = [b for t, b in enumerate(breakdown[:, 1]) if t != 3]
        assert sum(non_transition) == 0.0

    def test_running_max_penalty(self):
        total, _, breakdown = ranking_loss(np.array([0.9, 0.6]),
                                           np.array([0, 0]), lam_s=0.0, lam_r=1.0)
        assert breakdown[1, 1] == pytest.approx(0.3)
        assert total == pytest.approx(0.3)

    def test_transition_term_is_previous_phase_score(self):
        scores = np.array([0.8, 0.7])
        labels = np.array([0, 1])
        _, _, breakdown = ranking_loss(scores, labels)
        assert breakdown[1, 1] == pytest.approx(1.0 - 0.7)

    def test_lambda_grid_accepted(self):
        scores = np.array([0.9, 0.8, 0.6, 0.7])
        labels = np.array([0, 0, 1, 1])
        for lam_s, lam_r in ((0.5, 1.0), (1.0, 1.0), (1.0, 0.5)):
            total, grad, _ = ranking_loss(scores, labels, lam_s, lam_r)
            assert np.isfinite(total) and np.isfinite(grad).all()

    def test_malformed_labels(self):
        with pytest.raises(NeuralError):
            ranking_loss(np.array([0.5, 0.5]), np.array([1, 0]))

    def test_rank_sum_zero_iff_condition(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            n = int(rng.integers(2, 8))
            k = int(rng.integers(1, n + 1))
            labels = np.array([0] * k + [1] * (n - k))
            scores = np.round(rng.uniform(0.0, 1.0, size=n), 2)
            _, _, breakdown = ranking_loss(scores, labels)
            rank_sum = breakdown[:, 1].sum()
            monotone = all(np.diff(scores[:k]) >= 0) and all(np.diff(scores[k:]) >= 0)
            transition_clean = k == n or scores[k] == 1.0
            assert (rank_sum == 0.0) == (monotone and transition_clean)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        labels = np.array([0, 0, 0, 1, 1, 1, 1])
        scores = rng.uniform(0.05, 0.95, size=7)
        _, grad, _ = ranking_loss(scores, labels, 0.7, 1.3)
        numeric = central_diff(lambda s: ranking_loss(s, labels, 0.7, 1.3)[0],
                               scores, eps=1e-7)
        assert relative_error(grad, numeric) < 1e-5


class TestAdagrad:
    def test_first_step_is_signed_learning_rate(self):
        params = {"w": np.array([0.0])}
        opt = Adagrad(params, OptimizerConfig(learning_rate=0.1, weight_decay=0.0,
                                              grad_clip_norm=None))
        opt.step({"w": np.array([2.5])})
        assert params["w"][0] == pytest.approx(-0.1, rel=1e-6)

    def test_global_norm_clipping(self):
        params = {"a": np.zeros(2), "b": np.zeros(1)}
        opt = Adagrad(params, OptimizerConfig(learning_rate=0.1, weight_decay=0.0,
                                              grad_clip_norm=5.0))
        grads = {"a": np.array([8.0, 0.0]), "b": np.array([6.0])}  # norm 10
        opt.step(grads)
        # accumulators hold the squared clipped gradients (halved)
        assert opt.accum["a"][0] == pytest.approx(16.0)
        assert opt.accum["b"][0] == pytest.approx(9.0)

    def test_zero_gradient_moves_only_by_decay(self):
        params = {"w": np.array([1.0])}
        opt = Adagrad(params, OptimizerConfig(learning_rate=0.1, weight_decay=0.01))
        opt.step({"w": np.array([0.0])})
        assert params["w"][0] != 1.0
        opt2 = Adagrad({"w": np.array([1.0])},
                       OptimizerConfig(learning_rate=0.1, weight_decay=0.0))
        start = opt2.params["w"].copy()
        opt2.step({"w": np.array([0.0])})
        assert opt2.params["w"][0] == start[0]

    def test_quadratic_bowl_monotone(self):
        params = {"x": np.array([5.0, -3.0])}
        opt = Adagrad(params, OptimizerConfig(learning_rate=0.5, weight_decay=0.0,
                                              grad_clip_norm=None))
        losses = []
        for _ in range(100):
            losses.append(float(params["x"] @ params["x"]))
            opt.step({"x": 2.0 * params["x"]})
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_nonfinite_gradient_rejected(self):
        opt = Adagrad({"w": np.zeros(1)}, OptimizerConfig())
        with pytest.raises(NeuralError):
            opt.step({"w": np.array([np.inf])})

    def test_momentum_smoothing(self):
        params = {"w": np.array([0.0])}
        opt = Adagrad(params, OptimizerConfig(learning_rate=0.1, momentum=0.9,
                                              weight_decay=0.0, grad_clip_norm=None))
        opt.step({"w": np.array([1.0])})
        first = params["w"].copy()
        opt.step({"w": np.array([0.0])})
        # velocity keeps carrying the parameter in the same direction
        assert params["w"][0] < first[0]


class TestBptt:
    def test_full_gradient_check(self):
        rng = np.random.default_rng(12)
        params = init_lstm_params(4, 8, 3, seed=7)
        xs = rng.standard_normal((3, 4))
        targets = rng.standard_normal((3, 3))

        def loss_at(flat):
            trial = params.copy()
            offset = 0
            for tensor in trial.tensors().values():
                tensor.flat[:] = flat[offset:offset + tensor.size]
                offset += tensor.size
            _, ys = lstm_forward(trial, xs)
            return float(np.sum((ys - targets) ** 2))

        trace = lstm_forward(params, xs, return_trace=True)
        grads = lstm_backward(params, trace, 2.0 * (trace.ys - targets))
        flat = np.concatenate([t.ravel() for t in params.tensors().values()])
        numeric = central_diff(loss_at, flat)
        analytic = np.concatenate([grads[k].ravel() for k in params.tensors()])
        assert relative_error(analytic, numeric) < 1e-6

    def test_dys_shape_checked(self):
        params = init_lstm_params(3, 4, 2, seed=0)
        trace = lstm_forward(params, np.zeros((2, 3)), return_trace=True)
        with pytest.raises(NeuralError):
            lstm_backward(params, trace, np.zeros((3, 2)))


class TestCheckpoint:
    def test_roundtrip_bytes_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        tensors = {"a": rng.standard_normal((3, 2)), "b": rng.standard_normal(4)}
        config = {"type": "unified", "loss": {"kind": "CONVEX"}, "note": 7}
        first = tmp_path / "one.ckpt"
        save_checkpoint(first, config, 42, tensors)
        cfg2, seed2, tensors2 = load_checkpoint(first)
        second = tmp_path / "two.ckpt"
        save_checkpoint(second, cfg2, seed2, tensors2)
        assert first.read_bytes() == second.read_bytes()
        assert cfg2 == config and seed2 == 42
        for key in tensors:
            assert np.array_equal(tensors[key], tensors2[key])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"NOPE\n{}")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_corrupt_payload(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"PGM1\n{not json")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_inconsistent_shapes_rejected(self):
        with pytest.raises(NeuralError):
            LstmParams(wx=np.zeros((3, 8)), wh=np.zeros((2, 9)), b=np.zeros(8),
                       w_out=np.zeros((2, 2)), b_out=np.zeros(2))
