"""Predictors: ODE-LSTM semantics and training, EKF tracking, ARIMA fitting."""

import numpy as np
import pytest

from beamalign import nn
from beamalign.channel import (
    ArrayConfig,
    Codebook,
    beam_center_aod,
    best_beam,
    build_codebook,
    channel_vector,
    steering_vector,
    synth_pilot,
)
from beamalign.mobility import MobilityConfig, SceneConfig, channel_trace, gen_trajectory
from beamalign.predictors import (
    ArimaModel,
    EkfConfig,
    EkfState,
    ModelDims,
    TrainConfig,
    arima_fit,
    arima_forecast,
    ekf_init,
    ekf_predict,
    ekf_query,
    ekf_update,
    forecast_to_beam_indices,
    init_model,
    initial_state,
    load_model,
    lstm_onestep_predict,
    odelstm_ingest,
    odelstm_query,
    odelstm_train,
    save_model,
)
from beamalign.protocol import ProtocolConfig, make_stage_simulator
from beamalign.selection import Direction, to_local, uneven_coverage

ARR = ArrayConfig(num_antennas=8, codebook_size=16)
CB = build_codebook(ARR)


def _pilots_for(cs, h, rng, noise=0.0, time_s=0.0):
    return [synth_pilot(h, g, CB, noise, rng, time_s=time_s) for g in cs.global_indices]


def _zeroed_model(width=5):
    model = init_model(
        np.random.default_rng(0), "track",
        ModelDims(input_width=width, conv_channels=4, conv_layers=2, kernel=3,
                  hidden=6, ode_hidden=6),
    )
    for arr in model.param_dict().values():
        arr[...] = 0.0
    return model


class TestOdeLstmOps:
    CS = uneven_coverage(8, 5, 16, 1, Direction.INCREASING)

    def test_zero_model_keeps_zero_hidden(self):
        model = _zeroed_model()
        h = steering_vector(0.2, ARR)
        pilots = _pilots_for(self.CS, h, np.random.default_rng(0))
        state = odelstm_ingest(model, initial_state(model), pilots, self.CS)
        np.testing.assert_array_equal(state.h, 0.0)
        np.testing.assert_array_equal(state.c, 0.0)

    def test_ingest_deterministic(self):
        model = init_model(
            np.random.default_rng(1), "track",
            ModelDims(input_width=5, conv_channels=4, hidden=6, ode_hidden=6),
        )
        h = steering_vector(0.2, ARR)
        pilots = _pilots_for(self.CS, h, np.random.default_rng(0), noise=0.1)
        a = odelstm_ingest(model, initial_state(model), pilots, self.CS)
        b = odelstm_ingest(model, initial_state(model), pilots, self.CS)
        np.testing.assert_array_equal(a.h, b.h)
        np.testing.assert_array_equal(a.c, b.c)

    def test_pilot_count_mismatch_rejected(self):
        model = _zeroed_model(width=5)
        h = steering_vector(0.2, ARR)
        pilots = _pilots_for(self.CS, h, np.random.default_rng(0))
        with pytest.raises(ValueError, match="pilot count"):
            odelstm_ingest(model, initial_state(model), pilots[:-1], self.CS)

    def test_query_at_stage_time_is_raw_head(self):
        model = init_model(
            np.random.default_rng(2), "track",
            ModelDims(input_width=5, conv_channels=4, hidden=6, ode_hidden=6),
        )
        model.fc.weight[...] = np.random.default_rng(3).normal(size=model.fc.weight.shape)
        h = steering_vector(0.3, ARR)
        pilots = _pilots_for(self.CS, h, np.random.default_rng(0), time_s=1.0)
        state = odelstm_ingest(model, initial_state(model), pilots, self.CS)
        out = odelstm_query(model, state, 1.0, self.CS)
        np.testing.assert_array_equal(out.probabilities, nn.fc_softmax(model.fc, state.h))

    def test_query_before_stage_rejected(self):
        model = _zeroed_model()
        h = steering_vector(0.3, ARR)
        pilots = _pilots_for(self.CS, h, np.random.default_rng(0), time_s=1.0)
        state = odelstm_ingest(model, initial_state(model), pilots, self.CS)
        with pytest.raises(ValueError, match="precedes"):
            odelstm_query(model, state, 0.5, self.CS)

    def test_zero_head_uniform_and_first_local(self):
        model = _zeroed_model()
        h = steering_vector(0.3, ARR)
        pilots = _pilots_for(self.CS, h, np.random.default_rng(0))
        state = odelstm_ingest(model, initial_state(model), pilots, self.CS)
        out = odelstm_query(model, state, 0.05, self.CS)
        np.testing.assert_allclose(out.probabilities, 0.2)
        assert out.local_index == 1
        assert out.global_index == self.CS.global_indices[0]

    def test_mapping_round_trip(self):
        model = init_model(
            np.random.default_rng(4), "track",
            ModelDims(input_width=5, conv_channels=4, hidden=6, ode_hidden=6),
        )
        model.fc.weight[...] = np.random.default_rng(5).normal(size=model.fc.weight.shape)
        h = steering_vector(-0.4, ARR)
        pilots = _pilots_for(self.CS, h, np.random.default_rng(1), noise=0.05)
        state = odelstm_ingest(model, initial_state(model), pilots, self.CS)
        out = odelstm_query(model, state, 0.07, self.CS)
        assert out.global_index in self.CS.global_indices
        assert to_local(out.global_index, self.CS) == out.local_index
        assert abs(out.probabilities.sum() - 1.0) < 1e-9

    def test_onestep_same_beam_everywhere(self):
        model = init_model(
            np.random.default_rng(6), "track",
            ModelDims(input_width=5, conv_channels=4, hidden=6, ode_hidden=6),
            ode_enabled=False,
        )
        model.fc.weight[...] = np.random.default_rng(7).normal(size=model.fc.weight.shape)
        h = steering_vector(0.1, ARR)
        pilots = _pilots_for(self.CS, h, np.random.default_rng(2), time_s=0.0)
        state = odelstm_ingest(model, initial_state(model), pilots, self.CS)
        query = lstm_onestep_predict(model, state, 0.0, 0.1, self.CS)
        outs = [query(t) for t in np.linspace(0.001, 0.099, 99)]
        assert len({o.global_index for o in outs}) == 1
        assert outs[0].time_s == 0.001  # stamped with the queried instant
        mid = query(0.05)
        assert mid.time_s == 0.05

    def test_checkpoint_round_trip(self, tmp_path):
        model = init_model(
            np.random.default_rng(8), "track",
            ModelDims(input_width=5, conv_channels=4, hidden=6, ode_hidden=6),
        )
        path = tmp_path / "model.bmdl"
        save_model(model, path)
        back = load_model(path)
        assert back.variant == model.variant
        assert back.dims == model.dims
        for k, v in model.param_dict().items():
            np.testing.assert_array_equal(back.param_dict()[k], v)


def _tiny_training_setup(duration=0.3, speed=5.0, seed=0):
    cfg = ProtocolConfig(
        period_s=0.1, candidate_size=5, j0=1, strategy="uneven",
        prediction_count=9, noise_variance=0.0,
    )
    mobility = MobilityConfig(
        speed_mps=speed, duration_s=duration, start_radius_bounds_m=(15.0, 25.0)
    )
    rng = np.random.default_rng(seed)
    traj = gen_trajectory(mobility, rng)
    trace = channel_trace(traj, SceneConfig(num_paths=2), ARR, rng)
    sim = make_stage_simulator(cfg, CB)
    return trace, sim


class TestOdeLstmTraining:
    TRAIN = TrainConfig(
        epochs=200, learning_rate=5e-3, batch_size=4, ode_steps=5,
        conv_channels=4, hidden=8, ode_hidden=8,
    )

    def test_overfits_single_trajectory(self):
        trace, sim = _tiny_training_setup()
        model, losses = odelstm_train([trace], sim, self.TRAIN, np.random.default_rng(0))
        assert losses[-1] < 0.1 * losses[0]
        assert model.variant == "track"
        assert model.dims.conv_layers == 2

    def test_initial_loss_is_log_k(self):
        trace, sim = _tiny_training_setup()
        cfg = TrainConfig(epochs=1, conv_channels=4, hidden=8, ode_hidden=8, ode_steps=5)
        _, losses = odelstm_train([trace], sim, cfg, np.random.default_rng(0))
        assert abs(losses[0] - np.log(5)) < 1e-9

    def test_training_deterministic(self):
        trace, sim = _tiny_training_setup(seed=3)
        cfg = TrainConfig(epochs=5, conv_channels=4, hidden=8, ode_hidden=8, ode_steps=5)
        _, l1 = odelstm_train([trace], sim, cfg, np.random.default_rng(11))
        _, l2 = odelstm_train([trace], sim, cfg, np.random.default_rng(11))
        assert l1 == l2

    def test_empty_training_set_rejected(self):
        _, sim = _tiny_training_setup()
        with pytest.raises(ValueError, match="empty"):
            odelstm_train([], sim, self.TRAIN, np.random.default_rng(0))


class TestEkf:
    def test_stationary_noiseless_fixed_point(self):
        phi = 0.21
        h = 0.8 * steering_vector(phi, ARR)
        state = EkfState(
            mean=np.array([phi, 0.0]),
            covariance=np.diag([0.01, 0.1]),
            process_noise=0.0,
            measurement_noise=0.0,
            last_update_time_s=0.0,
        )
        rng = np.random.default_rng(0)
        for stage in range(1, 6):
            pilots = [
                synth_pilot(h, q, CB, 0.0, rng, time_s=0.1 * stage)
                for q in range(1, CB.size + 1)
            ]
            state = ekf_update(state, pilots, None, CB)
        assert abs(state.mean[0] - phi) < 1e-9
        assert abs(state.mean[1]) < 1e-9

    def test_predict_only_trace_nondecreasing(self):
        state = ekf_init(5, CB, EkfConfig(process_noise_density=0.5))
        traces = []
        for _ in range(10):
            x, P = ekf_predict(state, 0.1)
            traces.append(np.trace(P))
            state = EkfState(
                mean=x, covariance=P,
                process_noise=state.process_noise,
                measurement_noise=state.measurement_noise,
                last_update_time_s=state.last_update_time_s + 0.1,
            )
        assert all(b >= a - 1e-12 for a, b in zip(traces, traces[1:]))

    def test_tracks_linear_ramp_rate(self):
        rate = 0.05  # rad/s
        phi0 = -0.1
        arr = ArrayConfig(num_antennas=16, codebook_size=64)
        cb = build_codebook(arr)
        rng = np.random.default_rng(0)
        state = None
        for n in range(20):
            t = 0.1 * n
            phi = phi0 + rate * t
            h = steering_vector(phi, arr)
            pilots = [synth_pilot(h, q, cb, 0.0, rng, time_s=t) for q in range(1, 65)]
            if state is None:
                powers = [abs(p.value) ** 2 for p in pilots]
                q0 = int(np.argmax(powers)) + 1
                state = ekf_init(q0, cb, EkfConfig(process_noise_density=0.1), time_s=t)
            state = ekf_update(state, pilots, None, cb)
        assert abs(state.mean[1] - rate) / rate < 0.05

    def test_query_zero_rate_constant_beam(self):
        state = EkfState(
            mean=np.array([0.3, 0.0]), covariance=np.eye(2) * 0.01,
            process_noise=0.0, measurement_noise=None, last_update_time_s=0.0,
        )
        beams = {ekf_query(state, t, CB).global_index for t in (0.0, 0.5, 3.0)}
        assert len(beams) == 1

    def test_query_matches_oracle_for_single_los(self):
        for q in range(1, CB.size + 1):
            phi = beam_center_aod(q, ARR)
            state = EkfState(
                mean=np.array([phi, 0.0]), covariance=np.eye(2) * 0.01,
                process_noise=0.0, measurement_noise=None, last_update_time_s=0.0,
            )
            out = ekf_query(state, 0.0, CB)
            h = steering_vector(phi, ARR)
            assert out.global_index == best_beam(h, CB)

    def test_query_probabilities_one_hot(self):
        state = ekf_init(3, CB, EkfConfig())
        out = ekf_query(state, 0.2, CB)
        assert out.probabilities.sum() == 1.0
        assert out.probabilities[out.global_index - 1] == 1.0

    def test_covariance_stays_spd(self):
        rng = np.random.default_rng(1)
        state = ekf_init(8, CB, EkfConfig(process_noise_density=0.5))
        for n in range(1, 15):
            phi = 0.02 * n
            h = steering_vector(phi, ARR) + 0.05 * (
                rng.normal(size=8) + 1j * rng.normal(size=8)
            )
            pilots = [
                synth_pilot(h, q, CB, 1e-3, rng, time_s=0.1 * n) for q in range(1, 17)
            ]
            state = ekf_update(state, pilots, None, CB)
            eig = np.linalg.eigvalsh(state.covariance)
            assert np.all(eig > 0)


class TestArima:
    def test_constant_series(self):
        model = arima_fit([5.0] * 20)
        assert model.order == (0, 0, 0)
        fc = arima_forecast(model, [5.0] * 20, 4)
        np.testing.assert_allclose(fc, 5.0, atol=1e-9)

    def test_linear_ramp_differenced_exactly(self):
        series = list(range(1, 21))
        model = arima_fit(series)
        assert model.order[1] == 1
        assert float(np.max(np.abs(model.residuals))) < 1e-9
        fc = arima_forecast(model, series, 3)
        np.testing.assert_allclose(fc, [21.0, 22.0, 23.0], atol=1e-9)

    def test_white_noise_prefers_smallest_model(self):
        rng = np.random.default_rng(0)
        series = rng.normal(size=300)
        model = arima_fit(series)
        aics = dict(model.search)
        assert aics[(0, 0, 0)] < aics[(3, 1, 2)]

    def test_selected_aic_is_minimal(self):
        rng = np.random.default_rng(1)
        series = np.cumsum(rng.normal(size=64))
        model = arima_fit(series)
        assert all(model.aic <= aic + 1e-12 for _, aic in model.search)

    def test_ar1_recursion(self):
        model = ArimaModel(
            order=(1, 0, 0), ar=np.array([0.5]), ma=np.zeros(0), intercept=0.0,
            residuals=np.zeros(0), aic=0.0, search=(),
        )
        fc = arima_forecast(model, [2.0, 4.0, 8.0], 2)
        np.testing.assert_allclose(fc, [4.0, 2.0])

    def test_zero_steps(self):
        model = arima_fit([1.0] * 12)
        assert arima_forecast(model, [1.0] * 12, 0) == []

    def test_short_series_rejected(self):
        with pytest.raises(ValueError, match="length"):
            arima_fit([1.0, 2.0, 3.0])

    def test_beam_index_helper(self):
        assert forecast_to_beam_indices([0.2, 3.6, 99.0, -4.0, 8.5], 16) == [1, 4, 16, 1, 9]
