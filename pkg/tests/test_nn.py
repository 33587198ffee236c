"""Neural kernel: forward semantics, gradients vs finite differences, Adam."""

import io

import numpy as np
import pytest

from beamalign import nn


def _loss_and_grads_conv(p, x, target):
    def f(params):
        cp = nn.Conv1dParams(weight=params["weight"], bias=params["bias"])
        y = nn.conv1d_forward(cp, x)
        loss = 0.5 * float(np.sum((y - target) ** 2))
        gy = y - target
        _, grads = nn.conv1d_backward(cp, x, gy)
        return loss, grads

    return f


class TestConv1d:
    def test_identity_kernel(self):
        p = nn.Conv1dParams(weight=np.zeros((1, 1, 3)), bias=np.zeros(1))
        p.weight[0, 0, 1] = 1.0
        x = np.arange(8.0).reshape(1, 8)
        np.testing.assert_allclose(nn.conv1d_forward(p, x), x)

    def test_zero_weights_emit_bias(self):
        p = nn.Conv1dParams(weight=np.zeros((2, 3, 3)), bias=np.array([1.5, -2.0]))
        x = np.random.default_rng(0).normal(size=(3, 5))
        y = nn.conv1d_forward(p, x)
        np.testing.assert_allclose(y[0], 1.5)
        np.testing.assert_allclose(y[1], -2.0)

    def test_channel_mismatch_rejected(self):
        p = nn.Conv1dParams(weight=np.zeros((1, 2, 3)), bias=np.zeros(1))
        with pytest.raises(ValueError):
            nn.conv1d_forward(p, np.zeros((3, 5)))

    @pytest.mark.parametrize("seed", range(5))
    def test_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        p = nn.init_conv1d(rng, c_out=3, c_in=2, kernel=3)
        x = rng.normal(size=(2, 7))
        target = rng.normal(size=(3, 7))
        err = nn.grad_check(
            _loss_and_grads_conv(p, x, target),
            {"weight": p.weight, "bias": p.bias},
        )
        assert err <= 1e-4

    @pytest.mark.parametrize("seed", range(3))
    def test_input_gradient(self, seed):
        rng = np.random.default_rng(seed + 10)
        p = nn.init_conv1d(rng, c_out=2, c_in=2, kernel=5)
        x0 = rng.normal(size=(4, 2, 9))  # batched
        target = rng.normal(size=(4, 2, 9))

        def f(params):
            y = nn.conv1d_forward(p, params["x"])
            gx, _ = nn.conv1d_backward(p, params["x"], y - target)
            return 0.5 * float(np.sum((y - target) ** 2)), {"x": gx}

        assert nn.grad_check(f, {"x": x0}) <= 1e-4


class TestLstmCell:
    def test_zero_params_closed_form(self):
        p = nn.LstmCellParams(*([np.zeros((3, 2)), np.zeros((3, 3)), np.zeros(3)] * 4))
        c = np.array([0.4, -1.0, 2.0])
        h2, c2 = nn.lstm_cell_step(p, np.zeros(2), np.zeros(3), c)
        np.testing.assert_allclose(c2, 0.5 * c)
        np.testing.assert_allclose(h2, 0.5 * np.tanh(0.5 * c))

    def test_all_zero_state(self):
        p = nn.LstmCellParams(*([np.zeros((3, 2)), np.zeros((3, 3)), np.zeros(3)] * 4))
        h2, c2 = nn.lstm_cell_step(p, np.zeros(2), np.zeros(3), np.zeros(3))
        np.testing.assert_allclose(h2, 0.0)
        np.testing.assert_allclose(c2, 0.0)

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(0)
        p = nn.init_lstm(rng, input_size=2, hidden_size=3)
        with pytest.raises(ValueError):
            nn.lstm_cell_step(p, np.zeros(5), np.zeros(3), np.zeros(3))

    @pytest.mark.parametrize("seed", range(5))
    def test_bptt_gradients_over_three_steps(self, seed):
        rng = np.random.default_rng(seed)
        p = nn.init_lstm(rng, input_size=2, hidden_size=3)
        xs = rng.normal(size=(3, 2))
        target = rng.normal(size=3)
        pdict = nn.flatten_params("lstm", p)

        def f(params):
            lp = nn.LstmCellParams(**{k.split(".")[1]: v for k, v in params.items()})
            h = np.zeros(3)
            c = np.zeros(3)
            caches = []
            for t in range(3):
                h, c, cache = nn.lstm_cell_forward(lp, xs[t], h, c)
                caches.append(cache)
            loss = 0.5 * float(np.sum((h - target) ** 2))
            gh, gc = h - target, np.zeros(3)
            total = {k.split(".")[1]: np.zeros_like(v) for k, v in params.items()}
            for cache in reversed(caches):
                _, gh, gc, grads = nn.lstm_cell_backward(lp, cache, gh, gc)
                for k, g in grads.items():
                    total[k] += g
            return loss, {f"lstm.{k}": g for k, g in total.items()}

        assert nn.grad_check(f, pdict) <= 1e-4


class TestOdeEvolve:
    def test_zero_derivative_is_identity(self):
        net = nn.OdeDerivativeNet(
            w1=np.zeros((4, 3)), b1=np.zeros(4), w2=np.zeros((3, 4)), b2=np.zeros(3)
        )
        s0 = np.array([1.0, -2.0, 0.5])
        np.testing.assert_array_equal(nn.ode_evolve(net, s0, 5.0, 50), s0)

    def test_zero_elapsed_bit_exact(self):
        rng = np.random.default_rng(0)
        net = nn.init_ode(rng, hidden=3, ode_hidden=4)
        s0 = rng.normal(size=3)
        out = nn.ode_evolve(net, s0, 0.0, 10)
        assert np.array_equal(out, s0)

    @staticmethod
    def _decay_net(dim, scale=1e-4):
        # W2 tanh(scale * s) / scale ~ s for tiny scale; negate for decay
        return nn.OdeDerivativeNet(
            w1=scale * np.eye(dim),
            b1=np.zeros(dim),
            w2=-np.eye(dim) / scale,
            b2=np.zeros(dim),
        )

    def test_exponential_decay_closed_form(self):
        net = self._decay_net(3)
        s0 = np.array([0.01, -0.02, 0.005])
        out = nn.ode_evolve(net, s0, 1.0, 1000)
        expect = s0 * np.exp(-1.0)
        assert np.max(np.abs(out - expect) / np.abs(expect)) <= 1e-3

    def test_first_order_convergence(self):
        net = self._decay_net(1)
        s0 = np.array([0.01])
        expect = s0 * np.exp(-1.0)
        steps = [10, 20, 40, 80, 100]
        errs = [abs(nn.ode_evolve(net, s0, 1.0, n)[0] - expect[0]) for n in steps]
        # empirical order from the two endpoints of one decade
        order = np.log(errs[0] / errs[-1]) / np.log(steps[-1] / steps[0])
        assert order >= 0.9
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_per_row_elapsed_broadcast(self):
        net = self._decay_net(2)
        s0 = np.tile(np.array([0.01, 0.02]), (3, 1))
        elapsed = np.array([0.0, 0.5, 1.0])
        out = nn.ode_evolve(net, s0, elapsed, 400)
        for i, e in enumerate(elapsed):
            np.testing.assert_allclose(out[i], s0[i] * np.exp(-e), rtol=2e-3)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradients_through_all_steps(self, seed):
        rng = np.random.default_rng(seed)
        net = nn.init_ode(rng, hidden=3, ode_hidden=4)
        s0 = rng.normal(size=3)
        target = rng.normal(size=3)
        pdict = nn.flatten_params("ode", net)

        def f(params):
            on = nn.OdeDerivativeNet(**{k.split(".")[1]: v for k, v in params.items()})
            s, cache = nn.ode_evolve_forward(on, s0, 0.7, 6)
            loss = 0.5 * float(np.sum((s - target) ** 2))
            _, grads = nn.ode_evolve_backward(on, cache, s - target)
            return loss, {f"ode.{k}": g for k, g in grads.items()}

        assert nn.grad_check(f, pdict) <= 1e-4


class TestSoftmaxHead:
    def test_zero_head_uniform(self):
        p = nn.init_dense_zero(5, 3)
        probs = nn.fc_softmax(p, np.ones(3))
        np.testing.assert_allclose(probs, 0.2)

    def test_logit_shift_invariance(self):
        rng = np.random.default_rng(0)
        p = nn.DenseParams(weight=rng.normal(size=(4, 3)), bias=rng.normal(size=4))
        s = rng.normal(size=3)
        a = nn.fc_softmax(p, s)
        p2 = nn.DenseParams(weight=p.weight, bias=p.bias + 7.0)
        b = nn.fc_softmax(p2, s)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_probabilities_valid(self):
        rng = np.random.default_rng(1)
        p = nn.DenseParams(weight=rng.normal(size=(6, 4)), bias=rng.normal(size=6))
        s = rng.normal(size=(10, 4))
        probs = nn.fc_softmax(p, s)
        assert np.all(probs > 0) and np.all(probs < 1)
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_fused_loss_gradient(self, seed):
        rng = np.random.default_rng(seed)
        p = nn.DenseParams(weight=rng.normal(size=(4, 3)), bias=rng.normal(size=4))
        s = rng.normal(size=(6, 3))
        labels = rng.integers(0, 4, size=6)

        def f(params):
            dp = nn.DenseParams(weight=params["weight"], bias=params["bias"])
            probs, cache = nn.fc_softmax_forward(dp, s)
            loss = nn.cross_entropy_mean(probs, labels)
            _, grads = nn.fc_softmax_xent_backward(dp, cache, labels, 1.0 / 6)
            return loss, grads

        assert nn.grad_check(f, {"weight": p.weight, "bias": p.bias}) <= 1e-4


class TestCrossEntropy:
    def test_uniform(self):
        assert abs(nn.cross_entropy(np.full(7, 1 / 7), 3) - np.log(7)) < 1e-12

    def test_confident_correct(self):
        probs = np.array([0.0, 1.0, 0.0])
        assert nn.cross_entropy(probs, 2) == 0.0

    def test_two_class_value(self):
        assert abs(nn.cross_entropy(np.array([0.25, 0.75]), 2) - 0.2876820724517809) < 1e-12

    def test_floor_clamp(self):
        assert nn.cross_entropy(np.array([1.0, 0.0]), 2) == -np.log(1e-12)


class TestAdam:
    def test_zero_grads_leave_params(self):
        params = {"w": np.array([1.0, 2.0])}
        state = nn.adam_init(params, lr=0.1)
        nn.adam_step(state, params, {"w": np.zeros(2)})
        np.testing.assert_array_equal(params["w"], [1.0, 2.0])

    def test_first_step_closed_form(self):
        params = {"w": np.array([0.0])}
        state = nn.adam_init(params, lr=0.1)
        nn.adam_step(state, params, {"w": np.array([1.0])})
        assert abs(params["w"][0] + 0.1) < 1e-8  # -lr * m_hat / (sqrt(v_hat)+eps)

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(3)
            params = {"w": rng.normal(size=4)}
            state = nn.adam_init(params, lr=0.01)
            for _ in range(20):
                nn.adam_step(state, params, {"w": params["w"] * 0.3 + 1.0})
            return params["w"].copy()

        np.testing.assert_array_equal(run(), run())

    def test_shape_mismatch_rejected(self):
        params = {"w": np.zeros(2)}
        state = nn.adam_init(params, lr=0.1)
        with pytest.raises(ValueError):
            nn.adam_step(state, params, {"w": np.zeros(3)})


class TestGradCheck:
    def test_quadratic_exact(self):
        def f(params):
            th = params["theta"]
            return float(np.sum(th**2)), {"theta": 2 * th}

        err = nn.grad_check(f, {"theta": np.array([3.0])}, eps=1e-5)
        assert err <= 1e-8

    def test_detects_corrupted_gradient(self):
        def f(params):
            th = params["theta"]
            return float(np.sum(th**2)), {"theta": 4 * th}  # doubled on purpose

        err = nn.grad_check(f, {"theta": np.array([3.0])}, eps=1e-5)
        assert abs(err - 0.5) < 1e-6


class TestCheckpoints:
    def _params(self):
        rng = np.random.default_rng(0)
        return {
            "fc.weight": rng.normal(size=(4, 3)),
            "fc.bias": rng.normal(size=4),
            "lstm.wi": rng.normal(size=(3, 2)),
        }

    HEADER = {
        "variant": "track",
        "ode_enabled": True,
        "input_width": 11,
        "conv_channels": 10,
        "conv_layers": 2,
        "kernel": 3,
        "hidden": 32,
        "ode_hidden": 32,
        "out_dim": 11,
    }

    def test_round_trip(self, tmp_path):
        path = tmp_path / "m.bmdl"
        params = self._params()
        nn.save_checkpoint(path, self.HEADER, params)
        header, back = nn.load_checkpoint(path)
        assert header == self.HEADER
        assert set(back) == set(params)
        for k in params:
            np.testing.assert_array_equal(back[k], params[k])

    def test_bad_magic(self):
        with pytest.raises(nn.CheckpointFormatError, match="missing header"):
            nn.load_checkpoint(io.BytesIO(b"XXXX"))

    def test_truncation(self, tmp_path):
        path = tmp_path / "m.bmdl"
        nn.save_checkpoint(path, self.HEADER, self._params())
        raw = path.read_bytes()[:-4]
        with pytest.raises(nn.CheckpointFormatError, match="truncated"):
            nn.load_checkpoint(io.BytesIO(raw))

    def test_architecture_mismatch_is_descriptive(self):
        found = dict(self.HEADER)
        found["out_dim"] = 64
        with pytest.raises(nn.CheckpointFormatError, match="out_dim.*64.*11"):
            nn.check_architecture(found, self.HEADER)
