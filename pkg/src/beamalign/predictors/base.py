"""Common prediction output type and the episode-facing predictor interface."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import PilotObservation
from ..selection import CandidateSet


@dataclass(frozen=True)
class PredictionOutput:
    """A beam decision for one query instant.

    probabilities spans the predictor's output classes (candidate-set locals
    for tracking nets, all beams otherwise); local_index is the 1-based argmax
    and global_index its codebook position.
    """

    time_s: float
    probabilities: np.ndarray
    local_index: int
    global_index: int


class BeamPredictor:
    """Base class for per-episode predictor adapters.

    The protocol feeds one :meth:`observe_stage` per alignment stage and then
    queries arbitrary instants inside the following prediction period.  A
    candidate set of None marks a full scan (pilots arrive in global beam
    order 1..Q); otherwise pilots arrive in the set's local order.
    """

    def observe_stage(
        self,
        stage_time_s: float,
        pilots: list[PilotObservation],
        candidate_set: CandidateSet | None,
        measured_optimum: int,
    ) -> None:
        raise NotImplementedError

    def predict(self, query_time_s: float) -> PredictionOutput:
        raise NotImplementedError

    def predict_many(self, query_times_s) -> list[PredictionOutput]:
        return [self.predict(t) for t in query_times_s]
