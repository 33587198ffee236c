"""Geometric mmWave channel synthesis and DFT-codebook beamforming.

The base station carries an M-element uniform linear array (ULA) driven by a
Q-codeword DFT codebook; the user has a single antenna.  A channel is a sparse
sum of paths, each a (complex gain, angle of departure) pair.  Gains here use
the plain-transpose convention ``|h^T f|^2`` (no conjugation), so the codeword
that matches angle ``phi`` is the one whose phase slope ``theta_q = q/Q``
satisfies ``theta_q = (-(d/lambda) * sin(phi)) mod 1``.  Getting this sign
wrong silently picks mirrored beams; see :func:`codeword_theta`.

Beam indices are 1-based everywhere (q in 1..Q); array storage is 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AOD_SECTOR = (-np.pi / 2, np.pi / 2)


@dataclass(frozen=True)
class ArrayConfig:
    """ULA geometry and codebook size.

    num_antennas
        Element count M.
    element_spacing_over_wavelength
        d/lambda ratio; 0.5 is the critically sampled array.
    codebook_size
        Number of DFT codewords Q.
    """

    num_antennas: int
    codebook_size: int
    element_spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError(f"num_antennas must be >= 1, got {self.num_antennas}")
        if self.codebook_size < 1:
            raise ValueError(f"codebook_size must be >= 1, got {self.codebook_size}")
        if self.element_spacing_over_wavelength <= 0:
            raise ValueError(
                "element_spacing_over_wavelength must be > 0, got "
                f"{self.element_spacing_over_wavelength}"
            )


@dataclass(frozen=True)
class Path:
    """One propagation path: complex gain and angle of departure (radians)."""

    gain: complex
    aod_radians: float

    def __post_init__(self):
        lo, hi = AOD_SECTOR
        if not (lo <= self.aod_radians <= hi):
            raise ValueError(
                f"aod_radians {self.aod_radians} outside ULA sector [{lo}, {hi}]"
            )


@dataclass(frozen=True)
class ChannelSnapshot:
    """Multipath channel state at one time instant."""

    time_s: float
    paths: tuple[Path, ...]

    def __post_init__(self):
        if self.time_s < 0:
            raise ValueError(f"time_s must be nonnegative, got {self.time_s}")
        object.__setattr__(self, "paths", tuple(self.paths))


@dataclass(frozen=True)
class PilotObservation:
    """A received pilot sample: which beam, what was heard, at what noise level."""

    beam_index: int
    value: complex
    noise_variance: float
    time_s: float


@dataclass(frozen=True)
class Codebook:
    """DFT beamforming codebook; ``matrix[q-1]`` is codeword q."""

    array: ArrayConfig
    matrix: np.ndarray = field(repr=False)  # (Q, M) complex

    @property
    def size(self) -> int:
        return self.array.codebook_size

    def codeword(self, q: int) -> np.ndarray:
        """Codeword for 1-based beam index q."""
        if not 1 <= q <= self.size:
            raise ValueError(f"beam index {q} outside [1, {self.size}]")
        return self.matrix[q - 1]


def steering_vector(aod_radians: float, array: ArrayConfig) -> np.ndarray:
    """Unit-norm ULA steering vector for an angle of departure.

    Element m (0-based) is ``exp(j*2*pi*m*(d/lambda)*sin(aod)) / sqrt(M)``.
    """
    lo, hi = AOD_SECTOR
    if not (lo <= aod_radians <= hi):
        raise ValueError(f"aod {aod_radians} outside ULA sector [{lo}, {hi}]")
    m = np.arange(array.num_antennas)
    phase = 2 * np.pi * m * array.element_spacing_over_wavelength * np.sin(aod_radians)
    return np.exp(1j * phase) / np.sqrt(array.num_antennas)


def codeword_theta(q: int, array: ArrayConfig) -> float:
    """Phase slope theta_q = q/Q of codeword q."""
    return q / array.codebook_size


def build_codebook(array: ArrayConfig) -> Codebook:
    """All Q DFT codewords; codeword q has element m = exp(j*2*pi*m*q/Q)/sqrt(M)."""
    m = np.arange(array.num_antennas)
    q = np.arange(1, array.codebook_size + 1)
    phases = 2 * np.pi * np.outer(q, m) / array.codebook_size
    matrix = np.exp(1j * phases) / np.sqrt(array.num_antennas)
    return Codebook(array=array, matrix=matrix)


def channel_vector(snapshot: ChannelSnapshot, array: ArrayConfig) -> np.ndarray:
    """Superpose path contributions into the length-M channel vector."""
    h = np.zeros(array.num_antennas, dtype=complex)
    for p in snapshot.paths:
        h += p.gain * steering_vector(p.aod_radians, array)
    return h


def beamforming_gain(h: np.ndarray, f: np.ndarray) -> float:
    """``|h^T f|^2`` with plain (unconjugated) transpose."""
    h = np.asarray(h)
    f = np.asarray(f)
    if h.shape != f.shape:
        raise ValueError(f"dimension mismatch: h {h.shape} vs f {f.shape}")
    return float(np.abs(np.dot(h, f)) ** 2)


def beam_gains(h: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Gains of h against every codeword; vectorized over leading axes of h.

    h may be (M,) or (..., M); the result has shape (..., Q).
    """
    h = np.asarray(h)
    if h.shape[-1] != codebook.array.num_antennas:
        raise ValueError(
            f"channel dim {h.shape[-1]} != num_antennas {codebook.array.num_antennas}"
        )
    return np.abs(h @ codebook.matrix.T) ** 2


def best_beam(h: np.ndarray, codebook: Codebook) -> int:
    """1-based index of the gain-maximizing codeword (ties -> smallest index)."""
    return int(np.argmax(beam_gains(h, codebook))) + 1


def synth_pilot(
    h: np.ndarray,
    beam_index: int,
    codebook: Codebook,
    noise_variance: float,
    rng: np.random.Generator,
    time_s: float = 0.0,
) -> PilotObservation:
    """Received pilot ``y = h^T f_q + z`` for unit transmit symbol.

    z is circularly symmetric complex Gaussian: real and imaginary parts each
    carry variance ``noise_variance / 2``.  The rng is always advanced by two
    draws so pilot sequences stay aligned across noise settings.
    """
    if noise_variance < 0:
        raise ValueError(f"noise_variance must be >= 0, got {noise_variance}")
    f = codebook.codeword(beam_index)
    if h.shape != f.shape:
        raise ValueError(f"dimension mismatch: h {h.shape} vs codeword {f.shape}")
    std = np.sqrt(noise_variance / 2)
    z = complex(rng.normal(0.0, 1.0) * std, rng.normal(0.0, 1.0) * std)
    value = complex(np.dot(h, f)) + z
    return PilotObservation(
        beam_index=beam_index,
        value=value,
        noise_variance=noise_variance,
        time_s=time_s,
    )


def normalized_gain(h: np.ndarray, predicted_index: int, codebook: Codebook) -> float:
    """Gain of the predicted beam over the gain of the true optimum, in [0, 1].

    A zero channel (or a channel orthogonal to every codeword) makes any beam
    vacuously optimal, so the 0/0 case returns 1.
    """
    gains = beam_gains(h, codebook)
    if not 1 <= predicted_index <= codebook.size:
        raise ValueError(f"beam index {predicted_index} outside [1, {codebook.size}]")
    top = float(np.max(gains))
    if top == 0.0:
        return 1.0
    return float(gains[predicted_index - 1]) / top


def beam_center_aod(q: int, array: ArrayConfig) -> float:
    """Angle (radians) whose steering vector codeword q matches best.

    Solves ``theta_q = (-(d/lambda) sin(phi)) mod 1`` for phi, mapping the
    wrapped theta into sin(phi) in [-1, 1] and clamping to the valid range
    (codewords whose slope exceeds the array's visible region fold onto the
    sector edge).
    """
    theta = codeword_theta(q, array) % 1.0
    # wrap theta into [-0.5, 0.5) before inverting the sign
    if theta >= 0.5:
        theta -= 1.0
    s = -theta / array.element_spacing_over_wavelength
    return float(np.arcsin(np.clip(s, -1.0, 1.0)))


def nearest_beam_for_aod(aod_radians: float, array: ArrayConfig) -> int:
    """1-based codeword index nearest to an angle on the theta ring."""
    target = (-array.element_spacing_over_wavelength * np.sin(aod_radians)) % 1.0
    q = np.arange(1, array.codebook_size + 1)
    theta = (q / array.codebook_size) % 1.0
    d = np.abs(theta - target)
    ring = np.minimum(d, 1.0 - d)
    return int(np.argmin(ring)) + 1
