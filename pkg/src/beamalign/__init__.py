"""Desk-scale mmWave beam-alignment simulator and predictor library.

Synthesizes time-varying geometric channels for a moving user, runs a
low-overhead alignment protocol (candidate-beam tracking, continuous-time
neural beam prediction, scan/track mode switching), and benchmarks it against
Kalman, ARIMA, and one-step LSTM baselines on normalized beamforming gain and
training overhead.
"""

from . import channel, config, harness, mobility, nn, predictors, protocol, selection
from .channel import (
    ArrayConfig,
    ChannelSnapshot,
    Codebook,
    Path,
    PilotObservation,
    beam_gains,
    beamforming_gain,
    best_beam,
    build_codebook,
    channel_vector,
    normalized_gain,
    steering_vector,
    synth_pilot,
)
from .config import ConfigError, ExperimentConfig, load_config
from .mobility import (
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
from .protocol import (
    EpisodeLog,
    ProtocolConfig,
    StageLog,
    decide_adaptive,
    decide_periodic,
    make_selector,
    make_stage_simulator,
    overhead,
    run_episode,
    update_threshold,
)
from .selection import (
    CandidateSet,
    Direction,
    estimate_direction,
    even_coverage,
    interleaved_coverage,
    to_global,
    to_local,
    uneven_coverage,
)

__version__ = "0.1.0"
