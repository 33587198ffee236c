"""Extended Kalman filter baseline tracking [angle, angular rate].

The filter assumes one dominant departure path: the measurement model is the
steering-vector response of the probed codewords at the estimated angle, with
a complex amplitude fitted by least squares before each update (multipath and
amplitude error land in the measurement noise).  It refreshes only once per
alignment stage and extrapolates linearly in between, so its error grows with
the prediction horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..channel import (
    AOD_SECTOR,
    Codebook,
    PilotObservation,
    beam_center_aod,
    nearest_beam_for_aod,
    steering_vector,
)
from ..selection import CandidateSet, nearest_in_set
from .base import BeamPredictor, PredictionOutput

MIN_MEASUREMENT_VAR = 1e-12


class EkfDivergenceError(RuntimeError):
    """Covariance lost positive definiteness: the filter diverged."""


@dataclass(frozen=True)
class EkfConfig:
    process_noise_density: float = 1.0  # rad^2/s^3 white-noise angular acceleration
    measurement_noise: float | None = None  # None: use each pilot's own variance
    init_angle_var: float = 0.01
    init_rate_var: float = 1.0


@dataclass
class EkfState:
    mean: np.ndarray  # [aod_radians, aod_rate_radians_per_s]
    covariance: np.ndarray  # (2, 2) symmetric positive definite
    process_noise: float
    measurement_noise: float | None
    last_update_time_s: float = 0.0

    def __post_init__(self):
        _require_spd(self.covariance)


def _require_spd(P: np.ndarray) -> None:
    if not np.allclose(P, P.T, atol=1e-12):
        raise EkfDivergenceError("covariance not symmetric")
    eig = np.linalg.eigvalsh(P)
    if np.any(eig <= 0):
        raise EkfDivergenceError(f"covariance not positive definite (eigs {eig})")


def ekf_init(
    initial_beam: int, codebook: Codebook, cfg: EkfConfig, time_s: float = 0.0
) -> EkfState:
    """Start at the probed optimum's beam axis with zero rate."""
    angle = beam_center_aod(initial_beam, codebook.array)
    return EkfState(
        mean=np.array([angle, 0.0]),
        covariance=np.diag([cfg.init_angle_var, cfg.init_rate_var]),
        process_noise=cfg.process_noise_density,
        measurement_noise=cfg.measurement_noise,
        last_update_time_s=time_s,
    )


def _response_and_slope(phi: float, beams: np.ndarray, codebook: Codebook):
    """Model response u_q(phi) = a(phi)^T f_q and its derivative in phi."""
    arr = codebook.array
    a = steering_vector(phi, arr)
    m = np.arange(arr.num_antennas)
    da = (2j * np.pi * arr.element_spacing_over_wavelength * np.cos(phi) * m) * a
    F = codebook.matrix[beams - 1]  # (S, M)
    return F @ a, F @ da


def ekf_update(
    state: EkfState,
    pilots: Sequence[PilotObservation],
    cs: CandidateSet | None,
    codebook: Codebook,
) -> EkfState:
    """Constant-rate predict step plus one nonlinear pilot update.

    The measurement stacks real and imaginary parts of every probed pilot;
    the Jacobian is analytic in the angle.  Returns a new state; raises
    :class:`EkfDivergenceError` if the covariance leaves the SPD cone.
    """
    if not pilots:
        raise ValueError("ekf_update needs at least one pilot")
    t = pilots[0].time_s
    dt = t - state.last_update_time_s
    if dt < 0:
        raise ValueError("pilots precede the filter's last update")

    x, P = ekf_predict(state, dt)

    beams = np.array([p.beam_index for p in pilots])
    y = np.array([p.value for p in pilots])
    phi = float(np.clip(x[0], *AOD_SECTOR))
    u, du = _response_and_slope(phi, beams, codebook)

    denom = float(np.real(np.vdot(u, u)))
    amp = (np.vdot(u, y) / denom) if denom > 0 else 0.0

    z = np.concatenate([y.real, y.imag])
    z_model = np.concatenate([(amp * u).real, (amp * u).imag])
    slope = amp * du
    H = np.zeros((2 * len(beams), 2))
    H[:, 0] = np.concatenate([slope.real, slope.imag])

    if state.measurement_noise is not None:
        var = state.measurement_noise
    else:
        var = float(np.mean([p.noise_variance for p in pilots]))
    R = max(var, MIN_MEASUREMENT_VAR) / 2.0 * np.eye(2 * len(beams))

    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    x = x + K @ (z - z_model)
    # Joseph form keeps the covariance in the PSD cone under roundoff
    A = np.eye(2) - K @ H
    P = A @ P @ A.T + K @ R @ K.T
    P = (P + P.T) / 2.0
    _require_spd(P)

    x[0] = np.clip(x[0], *AOD_SECTOR)
    return EkfState(
        mean=x,
        covariance=P,
        process_noise=state.process_noise,
        measurement_noise=state.measurement_noise,
        last_update_time_s=t,
    )


def ekf_predict(state: EkfState, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Time-propagated (mean, covariance) under the constant-rate model."""
    F = np.array([[1.0, dt], [0.0, 1.0]])
    qc = state.process_noise
    Q = qc * np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])
    x = F @ state.mean
    P = F @ state.covariance @ F.T + Q
    return x, (P + P.T) / 2.0


def ekf_query(state: EkfState, query_time_s: float, codebook: Codebook) -> PredictionOutput:
    """Linear angle extrapolation mapped to the nearest codeword."""
    elapsed = query_time_s - state.last_update_time_s
    if elapsed < 0:
        raise ValueError("query precedes the filter's last update")
    phi = state.mean[0] + state.mean[1] * elapsed
    phi = float(np.clip(phi, *AOD_SECTOR))
    q = nearest_beam_for_aod(phi, codebook.array)
    probs = np.zeros(codebook.size)
    probs[q - 1] = 1.0
    return PredictionOutput(
        time_s=query_time_s, probabilities=probs, local_index=q, global_index=q
    )


class EkfPredictor(BeamPredictor):
    """Episode adapter; in tracking stages the decision is folded back into
    the probed candidate set so only probed beams are ever reported."""

    def __init__(self, codebook: Codebook, cfg: EkfConfig = EkfConfig()):
        self.codebook = codebook
        self.cfg = cfg
        self.state: EkfState | None = None
        self._cs: CandidateSet | None = None

    def observe_stage(self, stage_time_s, pilots, candidate_set, measured_optimum):
        if self.state is None:
            self.state = ekf_init(
                measured_optimum, self.codebook, self.cfg, time_s=stage_time_s
            )
        self.state = ekf_update(self.state, pilots, candidate_set, self.codebook)
        self._cs = candidate_set

    def predict(self, query_time_s: float) -> PredictionOutput:
        if self.state is None:
            raise RuntimeError("predict called before any stage was observed")
        out = ekf_query(self.state, query_time_s, self.codebook)
        if self._cs is not None and out.global_index not in self._cs.global_indices:
            g = nearest_in_set(out.global_index, self._cs, self.codebook.size)
            probs = np.zeros(self.codebook.size)
            probs[g - 1] = 1.0
            out = PredictionOutput(
                time_s=query_time_s, probabilities=probs, local_index=g, global_index=g
            )
        return out
