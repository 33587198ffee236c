"""Debug predictor that reads the true channel; upper bound for evaluations."""

from __future__ import annotations

import numpy as np

from ..channel import Codebook, beam_gains, channel_vector
from ..mobility import ChannelTrace
from .base import BeamPredictor, PredictionOutput


class OraclePredictor(BeamPredictor):
    """Returns the true optimal beam at every query; never part of benchmarks."""

    def __init__(self, trace: ChannelTrace, codebook: Codebook):
        self.trace = trace
        self.codebook = codebook
        self._gains = None

    def observe_stage(self, stage_time_s, pilots, candidate_set, measured_optimum):
        pass  # the oracle ignores pilots entirely

    def predict(self, query_time_s: float) -> PredictionOutput:
        if self._gains is None:
            H = np.stack(
                [channel_vector(s, self.trace.array) for s in self.trace.snapshots]
            )
            self._gains = beam_gains(H, self.codebook)
        idx = self.trace.nearest_index(query_time_s)
        q = int(np.argmax(self._gains[idx])) + 1
        probs = np.zeros(self.codebook.size)
        probs[q - 1] = 1.0
        return PredictionOutput(
            time_s=query_time_s, probabilities=probs, local_index=q, global_index=q
        )
