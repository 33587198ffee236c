"""Trajectories, synthetic channel traces, and trace persistence."""

import io

import numpy as np
import pytest

from beamalign.channel import AOD_SECTOR, ArrayConfig
from beamalign.mobility import (
    ChannelTrace,
    MobilityConfig,
    SceneConfig,
    TraceFormatError,
    Trajectory,
    channel_trace,
    gen_trajectory,
    load_trace,
    load_trace_table,
    prediction_instants,
    save_trace,
)

ARRAY = ArrayConfig(num_antennas=8, codebook_size=16)


def _cfg(**kw):
    base = dict(speed_mps=10.0, duration_s=1.0)
    base.update(kw)
    return MobilityConfig(**base)


class TestGenTrajectory:
    def test_zero_speed_stays_put(self):
        traj = gen_trajectory(_cfg(speed_mps=0.0), np.random.default_rng(0))
        assert np.all(traj.positions_m == traj.positions_m[0])

    def test_fencepost_sample_count(self):
        traj = gen_trajectory(_cfg(), np.random.default_rng(0))
        assert len(traj.times_s) == 1001

    def test_step_length_is_v_dt(self):
        traj = gen_trajectory(_cfg(turn_event_rate_hz=0.0), np.random.default_rng(1))
        steps = np.linalg.norm(np.diff(traj.positions_m, axis=0), axis=1)
        np.testing.assert_allclose(steps, 0.01, atol=1e-9)

    @pytest.mark.parametrize("seed", range(8))
    def test_speed_property_with_turns(self, seed):
        cfg = _cfg(
            speed_mps=25.0,
            duration_s=4.0,
            turn_event_rate_hz=2.0,
            heading_change_std_radians=1.0,
            start_radius_bounds_m=(5.0, 15.0),
        )
        traj = gen_trajectory(cfg, np.random.default_rng(seed))
        steps = np.linalg.norm(np.diff(traj.positions_m, axis=0), axis=1)
        np.testing.assert_allclose(steps, 25.0 * 0.001, atol=1e-9)

    @pytest.mark.parametrize("seed", range(8))
    def test_bearing_never_leaves_sector(self, seed):
        cfg = _cfg(
            speed_mps=30.0,
            duration_s=4.0,
            turn_event_rate_hz=3.0,
            heading_change_std_radians=1.5,
            start_radius_bounds_m=(2.0, 6.0),
        )
        traj = gen_trajectory(cfg, np.random.default_rng(seed))
        bearings = np.arctan2(traj.positions_m[:, 1], traj.positions_m[:, 0])
        assert np.all(bearings >= AOD_SECTOR[0])
        assert np.all(bearings <= AOD_SECTOR[1])

    def test_deterministic_given_seed(self):
        cfg = _cfg(turn_event_rate_hz=1.0, heading_change_std_radians=0.5)
        a = gen_trajectory(cfg, np.random.default_rng(42))
        b = gen_trajectory(cfg, np.random.default_rng(42))
        assert np.array_equal(a.positions_m, b.positions_m)


class TestChannelTrace:
    def test_broadside_single_path(self):
        traj = Trajectory(times_s=np.array([0.0]), positions_m=np.array([[30.0, 0.0]]))
        scene = SceneConfig(num_paths=1)
        trace = channel_trace(traj, scene, ARRAY, np.random.default_rng(0))
        (snap,) = trace.snapshots
        assert len(snap.paths) == 1
        assert snap.paths[0].aod_radians == 0.0

    def test_pathloss_halves_gain_at_double_range(self):
        traj = Trajectory(
            times_s=np.array([0.0, 1.0]), positions_m=np.array([[20.0, 0.0], [40.0, 0.0]])
        )
        scene = SceneConfig(num_paths=1, pathloss_exponent=2.0)
        trace = channel_trace(traj, scene, ARRAY, np.random.default_rng(0))
        g0 = abs(trace.snapshots[0].paths[0].gain)
        g1 = abs(trace.snapshots[1].paths[0].gain)
        assert abs(g1 - g0 / 2) < 1e-12

    def test_constant_path_count(self):
        traj = gen_trajectory(_cfg(duration_s=0.05), np.random.default_rng(3))
        trace = channel_trace(traj, SceneConfig(num_paths=3), ARRAY, np.random.default_rng(3))
        assert all(len(s.paths) == 3 for s in trace.snapshots)

    def test_los_phase_constant_along_trajectory(self):
        traj = gen_trajectory(_cfg(duration_s=0.05), np.random.default_rng(4))
        trace = channel_trace(traj, SceneConfig(num_paths=2), ARRAY, np.random.default_rng(4))
        phases = np.angle([s.paths[0].gain for s in trace.snapshots])
        assert np.ptp(phases) < 1e-9

    def test_aods_stay_in_sector(self):
        cfg = _cfg(duration_s=0.5, turn_event_rate_hz=2.0, heading_change_std_radians=1.0)
        traj = gen_trajectory(cfg, np.random.default_rng(5))
        scene = SceneConfig(num_paths=4, nlos_angle_spread_radians=2.0)
        trace = channel_trace(traj, scene, ARRAY, np.random.default_rng(5))
        for s in trace.snapshots:
            for p in s.paths:
                assert AOD_SECTOR[0] <= p.aod_radians <= AOD_SECTOR[1]

    def test_point_at_bs_rejected(self):
        traj = Trajectory(times_s=np.array([0.0]), positions_m=np.array([[0.0, 0.0]]))
        with pytest.raises(ValueError):
            channel_trace(traj, SceneConfig(num_paths=1), ARRAY, np.random.default_rng(0))

    def test_deterministic_given_seed(self):
        traj = gen_trajectory(_cfg(duration_s=0.02), np.random.default_rng(6))
        a = channel_trace(traj, SceneConfig(), ARRAY, np.random.default_rng(9))
        b = channel_trace(traj, SceneConfig(), ARRAY, np.random.default_rng(9))
        assert a.snapshots == b.snapshots


class TestPredictionInstants:
    def test_spec_spacing(self):
        got = prediction_instants(0.0, 0.1, 99)
        np.testing.assert_allclose(got, [0.001 * i for i in range(1, 100)], atol=1e-12)

    def test_single_instant_is_midpoint(self):
        assert prediction_instants(0.0, 0.1, 1) == [0.05]

    def test_strictly_increasing_and_interior(self):
        got = prediction_instants(2.0, 0.25, 37)
        assert all(b > a for a, b in zip(got, got[1:]))
        assert got[0] > 2.0 and got[-1] < 2.25


def _sample_trace(seed=0, duration=0.02):
    traj = gen_trajectory(_cfg(duration_s=duration), np.random.default_rng(seed))
    return channel_trace(traj, SceneConfig(), ARRAY, np.random.default_rng(seed))


class TestTracePersistence:
    def test_round_trip_identity(self, tmp_path):
        trace = _sample_trace()
        path = tmp_path / "t.btrc"
        save_trace(trace, path)
        back = load_trace(path)
        assert back.array == trace.array
        assert back.snapshots == trace.snapshots

    def test_round_trip_bit_exact_bytes(self, tmp_path):
        trace = _sample_trace(seed=1)
        p1, p2 = tmp_path / "a.btrc", tmp_path / "b.btrc"
        save_trace(trace, p1)
        save_trace(load_trace(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_input(self):
        with pytest.raises(TraceFormatError, match="missing header"):
            load_trace(io.BytesIO(b""))

    def test_bad_magic(self):
        with pytest.raises(TraceFormatError, match="missing header"):
            load_trace(io.BytesIO(b"NOPE" + b"\x00" * 64))

    def test_wrong_version_names_both(self, tmp_path):
        trace = _sample_trace()
        buf = io.BytesIO()
        save_trace(trace, buf)
        raw = bytearray(buf.getvalue())
        raw[4:6] = (99).to_bytes(2, "little")
        with pytest.raises(TraceFormatError, match="version 99.*expected 1"):
            load_trace(io.BytesIO(bytes(raw)))

    def test_truncated_body(self):
        trace = _sample_trace()
        buf = io.BytesIO()
        save_trace(trace, buf)
        raw = buf.getvalue()[:-7]
        with pytest.raises(TraceFormatError, match="truncated body"):
            load_trace(io.BytesIO(raw))

    def test_nearest_index_lookup(self):
        trace = _sample_trace(duration=0.01)
        assert trace.nearest_index(0.0) == 0
        assert trace.nearest_index(0.0034) == 3
        assert trace.nearest_index(99.0) == len(trace.snapshots) - 1


class TestTabularImport:
    def test_parses_rows_into_snapshots(self):
        text = [
            "# time path gain_re gain_im aod\n",
            "0.000, 0, 1.0, 0.5, 0.1\n",
            "0.000, 1, 0.2, -0.1, 0.3\n",
            "0.001, 0, 0.9, 0.5, 0.11\n",
            "0.001, 1, 0.2, -0.1, 0.31\n",
        ]
        trace = load_trace_table(text, ARRAY)
        assert len(trace.snapshots) == 2
        assert trace.snapshots[0].paths[0].gain == 1.0 + 0.5j
        assert trace.snapshots[1].paths[1].aod_radians == 0.31

    def test_empty_table_rejected(self):
        with pytest.raises(TraceFormatError, match="missing header"):
            load_trace_table(["# just a comment\n"], ARRAY)

    def test_wrong_column_count(self):
        with pytest.raises(TraceFormatError, match="expected 5 columns"):
            load_trace_table(["0.0 1 2 3\n"], ARRAY)

    def test_whitespace_separation(self):
        trace = load_trace_table(["0.0 0 1.0 0.0 0.2\n"], ARRAY)
        assert trace.snapshots[0].paths[0].aod_radians == 0.2


class TestMonotoneGainInRange:
    def test_los_gain_drops_as_ue_recedes(self):
        # straight radial walk away from the BS
        times = np.arange(6) * 0.001
        pos = np.stack([np.linspace(10, 20, 6), np.zeros(6)], axis=1)
        traj = Trajectory(times_s=times, positions_m=pos)
        trace = channel_trace(traj, SceneConfig(num_paths=1), ARRAY, np.random.default_rng(0))
        mags = [abs(s.paths[0].gain) for s in trace.snapshots]
        assert all(b < a for a, b in zip(mags, mags[1:]))
