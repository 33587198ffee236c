"""Periodic beam-alignment controller over a channel trace.

Each period starts with an alignment stage that either scans every codeword
or tracks a candidate subset built around the previous measured optimum, then
the predictor answers a fixed grid of query instants until the next stage.
Mode switching between scan and track is off, periodic, or adaptive (scan when
the last prediction instant's gain fell below a threshold).

The stage optimum is always the argmax of measured pilot powers (what a real
receiver can see); the true channel is consulted only for labels and metrics.
Real predictor adapters keep their reported beams inside the probed set in
tracking stages; the privileged oracle predictor is exempt by design.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channel import Codebook, beam_gains, channel_vector, synth_pilot
from .mobility import ChannelTrace, prediction_instants
from .predictors.odelstm import StageSample
from .selection import (
    CandidateSet,
    Direction,
    estimate_direction,
    even_coverage,
    interleaved_coverage,
    nearest_in_set,
    to_local,
    uneven_coverage,
)


@dataclass(frozen=True)
class ProtocolConfig:
    period_s: float = 0.1
    switch_rule: str = "off"  # off | periodic | adaptive
    switch_period_stages: int = 2
    candidate_size: int = 11
    j0: int = 2
    strategy: str = "uneven"  # even | uneven | interleaved
    adaptive_threshold_policy: str = "running_mean"  # running_mean | fixed
    fixed_threshold: float = 0.0
    prediction_count: int = 99
    noise_variance: float = 1e-4
    adaptive_uses_normalized: bool = True

    def __post_init__(self):
        if self.period_s <= 0:
            raise ValueError("period_s must be positive")
        if self.switch_rule not in ("off", "periodic", "adaptive"):
            raise ValueError(f"unknown switch rule {self.switch_rule!r}")
        if self.strategy not in ("even", "uneven", "interleaved"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.adaptive_threshold_policy not in ("running_mean", "fixed"):
            raise ValueError(
                f"unknown threshold policy {self.adaptive_threshold_policy!r}"
            )
        if self.switch_period_stages < 1:
            raise ValueError("switch_period_stages must be >= 1")
        if self.prediction_count < 1:
            raise ValueError("prediction_count must be >= 1")
        if not 1 <= self.j0 < self.candidate_size:
            raise ValueError("j0 must satisfy 1 <= j0 < candidate_size")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")


@dataclass
class StageLog:
    stage_index: int
    stage_time_s: float
    mode: str  # "scan" | "track"
    candidate_set: CandidateSet | None
    pilots_sent: int
    measured_optimum: int
    # one row per prediction instant: (time, predicted global index, normalized gain)
    predictions: list[tuple[float, int, float]] = field(default_factory=list)


@dataclass
class EpisodeLog:
    stages: list[StageLog]
    codebook_size: int
    period_s: float
    prediction_count: int
    trace_meta: dict | None = None

    def gains(self) -> np.ndarray:
        """All realized normalized gains, stage-major then instant order."""
        return np.array([g for s in self.stages for (_, _, g) in s.predictions])

    def mean_gain_by_tau(self) -> dict[float, float]:
        """Mean normalized gain per normalized prediction instant tau."""
        count = self.prediction_count
        sums = np.zeros(count)
        for s in self.stages:
            sums += np.array([g for (_, _, g) in s.predictions])
        means = sums / len(self.stages)
        return {
            (i + 1) / (count + 1): float(means[i]) for i in range(count)
        }


def decide_periodic(stage_index: int, switch_period_stages: int) -> bool:
    """Scan every fixed number of stages (stage 0 included)."""
    if stage_index < 0:
        raise ValueError("stage_index must be nonnegative")
    return stage_index % switch_period_stages == 0


def decide_adaptive(last_gain: float, threshold: float) -> bool:
    """Scan when the latest prediction quality dropped below the threshold."""
    return last_gain < threshold


def update_threshold(gain_history: Sequence[float]) -> float:
    """Running mean of all recorded prediction gains; 0 before any data."""
    if len(gain_history) == 0:
        return 0.0
    return float(np.mean(gain_history))


def build_candidate_set(
    anchor: int, cfg: ProtocolConfig, Q: int, direction: Direction
) -> CandidateSet:
    if cfg.candidate_size > Q:
        raise ValueError(f"candidate_size {cfg.candidate_size} exceeds codebook {Q}")
    if cfg.strategy == "even":
        return even_coverage(anchor, cfg.candidate_size, Q)
    if cfg.strategy == "uneven":
        return uneven_coverage(anchor, cfg.candidate_size, Q, cfg.j0, direction)
    return interleaved_coverage(anchor, cfg.candidate_size, Q, cfg.j0, direction)


def make_selector(cfg: ProtocolConfig, Q: int) -> Callable[[int, list[int]], CandidateSet]:
    """Candidate-set builder for predictor adapters on full-scan stages."""

    def select(anchor: int, optima_history: list[int]) -> CandidateSet:
        direction = estimate_direction(optima_history, Q) if optima_history else Direction.UNKNOWN
        return build_candidate_set(anchor, cfg, Q, direction)

    return select


def _true_gain_table(trace: ChannelTrace, codebook: Codebook) -> np.ndarray:
    """(num_snapshots, Q) gains of the true channel against every codeword."""
    H = np.stack([channel_vector(s, trace.array) for s in trace.snapshots])
    return beam_gains(H, codebook)


def _stage_count(trace: ChannelTrace, period_s: float) -> int:
    n = int(math.floor(trace.duration_s / period_s + 1e-9))
    if n < 1:
        raise ValueError(
            f"trace duration {trace.duration_s}s shorter than one period {period_s}s"
        )
    return n


def _probe(h, beams, codebook, cfg, rng, stage_time):
    return [
        synth_pilot(h, int(q), codebook, cfg.noise_variance, rng, time_s=stage_time)
        for q in beams
    ]


def _measured_argmax(pilots) -> int:
    powers = [abs(p.value) ** 2 for p in pilots]
    return pilots[int(np.argmax(powers))].beam_index


def run_episode(
    trace: ChannelTrace,
    predictor,
    cfg: ProtocolConfig,
    codebook: Codebook,
    rng: np.random.Generator,
) -> EpisodeLog:
    """Drive the full alignment/prediction timeline over one trace.

    Stage 0 always scans (no prior optimum exists).  The adaptive rule is fed
    by the gain of the last prediction instant of the previous period; its
    running-mean threshold averages every recorded prediction gain so far.
    """
    Q = codebook.size
    n_stages = _stage_count(trace, cfg.period_s)
    gains_true = _true_gain_table(trace, codebook)
    peak = gains_true.max(axis=1)

    t0 = trace.snapshots[0].time_s
    optima: list[int] = []
    threshold_history: list[float] = []
    last_gain = 1.0
    stages: list[StageLog] = []

    for n in range(n_stages):
        stage_time = t0 + n * cfg.period_s
        idx = trace.nearest_index(stage_time)
        h = channel_vector(trace.snapshots[idx], trace.array)

        if n == 0:
            scan = True
        elif cfg.switch_rule == "off":
            scan = False
        elif cfg.switch_rule == "periodic":
            scan = decide_periodic(n, cfg.switch_period_stages)
        else:
            if cfg.adaptive_threshold_policy == "running_mean":
                threshold = update_threshold(threshold_history)
            else:
                threshold = cfg.fixed_threshold
            scan = decide_adaptive(last_gain, threshold)

        if scan:
            cs = None
            pilots = _probe(h, range(1, Q + 1), codebook, cfg, rng, stage_time)
        else:
            direction = estimate_direction(optima, Q)
            cs = build_candidate_set(optima[-1], cfg, Q, direction)
            pilots = _probe(h, cs.global_indices, codebook, cfg, rng, stage_time)

        measured = _measured_argmax(pilots)
        predictor.observe_stage(stage_time, pilots, cs, measured)
        optima.append(measured)

        instants = prediction_instants(stage_time, cfg.period_s, cfg.prediction_count)
        outputs = predictor.predict_many(instants)
        log = StageLog(
            stage_index=n,
            stage_time_s=stage_time,
            mode="scan" if scan else "track",
            candidate_set=cs,
            pilots_sent=len(pilots),
            measured_optimum=measured,
        )
        for t, out in zip(instants, outputs):
            tidx = trace.nearest_index(t)
            raw = float(gains_true[tidx, out.global_index - 1])
            norm = raw / peak[tidx] if peak[tidx] > 0 else 1.0
            log.predictions.append((t, out.global_index, norm))
            metric = norm if cfg.adaptive_uses_normalized else raw
            threshold_history.append(metric)
            last_gain = metric
        stages.append(log)

    return EpisodeLog(
        stages=stages,
        codebook_size=Q,
        period_s=cfg.period_s,
        prediction_count=cfg.prediction_count,
        trace_meta=trace.meta,
    )


def overhead(log: EpisodeLog, Q: int | None = None) -> float:
    """Pilots actually sent over pilots a full scan every period would send."""
    if not log.stages:
        raise ValueError("episode log has no stages")
    Q = Q if Q is not None else log.codebook_size
    total = sum(s.pilots_sent for s in log.stages)
    return total / (Q * len(log.stages))


def make_stage_simulator(
    cfg: ProtocolConfig, codebook: Codebook, scan_all: bool = False
) -> Callable[[ChannelTrace, np.random.Generator], list[StageSample]]:
    """Model-independent training-data generator (mode switching off).

    Stage 0 scans all beams and later stages track, exactly as
    :func:`run_episode` with the off rule; each stage yields the packed pilot
    tensor the predictor would ingest plus oracle labels for every query
    instant (out-of-set optima map to the circularly nearest candidate).
    With scan_all=True every stage probes and ingests all Q beams in global
    order (for scanning-variant models) and labels stay global.
    """
    Q = codebook.size

    def simulate(trace: ChannelTrace, rng: np.random.Generator) -> list[StageSample]:
        from .predictors.odelstm import pack_pilots

        n_stages = _stage_count(trace, cfg.period_s)
        gains_true = _true_gain_table(trace, codebook)
        t0 = trace.snapshots[0].time_s
        optima: list[int] = []
        samples: list[StageSample] = []

        for n in range(n_stages):
            stage_time = t0 + n * cfg.period_s
            idx = trace.nearest_index(stage_time)
            h = channel_vector(trace.snapshots[idx], trace.array)

            if scan_all:
                pilots = _probe(h, range(1, Q + 1), codebook, cfg, rng, stage_time)
                measured = _measured_argmax(pilots)
                cs = None
                ingest = pilots
            elif n == 0:
                pilots = _probe(h, range(1, Q + 1), codebook, cfg, rng, stage_time)
                measured = _measured_argmax(pilots)
                cs = build_candidate_set(measured, cfg, Q, Direction.UNKNOWN)
                by_global = {p.beam_index: p for p in pilots}
                ingest = [by_global[g] for g in cs.global_indices]
            else:
                direction = estimate_direction(optima, Q)
                cs = build_candidate_set(optima[-1], cfg, Q, direction)
                pilots = _probe(h, cs.global_indices, codebook, cfg, rng, stage_time)
                measured = _measured_argmax(pilots)
                ingest = pilots
            optima.append(measured)

            instants = prediction_instants(stage_time, cfg.period_s, cfg.prediction_count)
            elapsed = np.array(instants) - stage_time
            labels = np.empty(len(instants), dtype=np.int64)
            direction_now = estimate_direction(optima, Q)
            for i, t in enumerate(instants):
                tidx = trace.nearest_index(t)
                if gains_true[tidx].max() == 0.0:
                    labels[i] = -1  # no oracle label for a dead channel
                    continue
                best = int(np.argmax(gains_true[tidx])) + 1
                if cs is None:
                    labels[i] = best - 1
                else:
                    local = to_local(best, cs)
                    if local is None:
                        folded = nearest_in_set(best, cs, Q, direction_now)
                        local = to_local(folded, cs)
                    labels[i] = local - 1
            samples.append(
                StageSample(
                    stage_time_s=stage_time,
                    pilot_tensor=pack_pilots(ingest),
                    candidate=cs,
                    query_elapsed_s=elapsed,
                    labels_local0=labels,
                )
            )
        return samples

    return simulate
