"""Synthetic UE trajectories and their time-indexed multipath channel traces.

The scene is 2-D: the base station sits at the origin with its array
broadside along +x, so a UE at (x, y) departs at angle atan2(y, x).  A
trajectory is piecewise-straight constant-speed motion with Poisson-timed
random heading changes; the channel trace derives one line-of-sight path from
geometry (bearing plus an r^(-exponent/2) amplitude law) and adds fixed-offset
reflected paths.  Path phases are drawn once per trajectory so the temporal
correlation the predictors exploit survives; set ``doppler_hz`` for a slow
deterministic phase rotation on top.

Traces persist to a small versioned binary format ("BTRC") and can also be
imported from plain tabular text; see :func:`save_trace` / :func:`load_trace`
/ :func:`load_trace_table`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .channel import AOD_SECTOR, ArrayConfig, ChannelSnapshot, Path

# Headings reflect off this sector inset and off a small keep-out disc around
# the BS so bearings never reach the ULA's ambiguous endfire directions.
SECTOR_MARGIN_RAD = 0.01
MIN_RANGE_M = 1.0

TRACE_MAGIC = b"BTRC"
TRACE_VERSION = 1


class TraceFormatError(ValueError):
    """Raised when a trace file fails to parse."""


@dataclass(frozen=True)
class MobilityConfig:
    speed_mps: float
    duration_s: float
    sample_interval_s: float = 0.001
    turn_event_rate_hz: float = 0.0
    heading_change_std_radians: float = 0.0
    start_radius_bounds_m: tuple[float, float] = (20.0, 60.0)

    def __post_init__(self):
        if self.speed_mps < 0:
            raise ValueError("speed_mps must be nonnegative")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if not 0 < self.sample_interval_s <= self.duration_s:
            raise ValueError("sample_interval_s must be in (0, duration_s]")
        if self.turn_event_rate_hz < 0 or self.heading_change_std_radians < 0:
            raise ValueError("turn event parameters must be nonnegative")
        lo, hi = self.start_radius_bounds_m
        if not 0 < lo <= hi:
            raise ValueError("start_radius_bounds_m must satisfy 0 < min <= max")


@dataclass(frozen=True)
class SceneConfig:
    """Parametric substitute for a ray-traced scene."""

    num_paths: int = 3
    nlos_relative_gain_db: float = 10.0  # power of each reflected path below LOS
    nlos_angle_spread_radians: float = 0.2
    pathloss_exponent: float = 2.0
    reference_gain: float = 30.0
    doppler_hz: float = 0.0

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        if self.nlos_angle_spread_radians < 0:
            raise ValueError("nlos_angle_spread_radians must be nonnegative")
        if self.reference_gain <= 0:
            raise ValueError("reference_gain must be positive")


@dataclass(frozen=True)
class Trajectory:
    times_s: np.ndarray = field(repr=False)
    positions_m: np.ndarray = field(repr=False)  # (N, 2)

    def __post_init__(self):
        if len(self.times_s) != len(self.positions_m):
            raise ValueError("times and positions must have equal length")


@dataclass(frozen=True)
class ChannelTrace:
    snapshots: tuple[ChannelSnapshot, ...]
    array: ArrayConfig
    meta: dict | None = None

    def __post_init__(self):
        times = np.array([s.time_s for s in self.snapshots])
        if np.any(np.diff(times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        lengths = {len(s.paths) for s in self.snapshots}
        if len(lengths) > 1:
            raise ValueError("every snapshot must carry the same number of paths")
        object.__setattr__(self, "_times", times)

    @property
    def times(self) -> np.ndarray:
        return self._times

    @property
    def duration_s(self) -> float:
        return self.snapshots[-1].time_s - self.snapshots[0].time_s

    def nearest_index(self, time_s: float) -> int:
        """Index of the snapshot closest in time (truth lookup, no interpolation)."""
        times = self._times
        i = int(np.searchsorted(times, time_s))
        if i <= 0:
            return 0
        if i >= len(times):
            return len(times) - 1
        return i if times[i] - time_s < time_s - times[i - 1] else i - 1


def _bearing(pos: np.ndarray) -> float:
    return float(np.arctan2(pos[1], pos[0]))


def _in_region(pos: np.ndarray) -> bool:
    lo = AOD_SECTOR[0] + SECTOR_MARGIN_RAD
    hi = AOD_SECTOR[1] - SECTOR_MARGIN_RAD
    r = float(np.hypot(pos[0], pos[1]))
    return r >= MIN_RANGE_M and lo <= _bearing(pos) <= hi


def gen_trajectory(cfg: MobilityConfig, rng: np.random.Generator) -> Trajectory:
    """Piecewise-straight constant-speed walk inside the broadside sector.

    Headings rotate by Gaussian draws at Poisson-timed turn events and reflect
    off the sector boundary (or, as a last resort, retrace the previous step)
    so every sample keeps a legal bearing and every step has length v*dt.
    """
    n_steps = int(round(cfg.duration_s / cfg.sample_interval_s))
    times = np.arange(n_steps + 1) * cfg.sample_interval_s

    lo = AOD_SECTOR[0] + SECTOR_MARGIN_RAD
    hi = AOD_SECTOR[1] - SECTOR_MARGIN_RAD
    bearing = rng.uniform(lo, hi)
    radius = rng.uniform(*cfg.start_radius_bounds_m)
    pos = radius * np.array([np.cos(bearing), np.sin(bearing)])
    heading = rng.uniform(0.0, 2 * np.pi)

    if cfg.turn_event_rate_hz > 0:
        next_turn = rng.exponential(1.0 / cfg.turn_event_rate_hz)
    else:
        next_turn = np.inf

    step_len = cfg.speed_mps * cfg.sample_interval_s
    positions = np.empty((n_steps + 1, 2))
    positions[0] = pos
    for k in range(1, n_steps + 1):
        while times[k] >= next_turn:
            heading += rng.normal(0.0, cfg.heading_change_std_radians)
            next_turn += rng.exponential(1.0 / cfg.turn_event_rate_hz)
        cand = pos + step_len * np.array([np.cos(heading), np.sin(heading)])
        tries = 0
        while step_len > 0 and not _in_region(cand):
            b = _bearing(cand)
            if tries >= 3:
                # reflections failed near a corner: scan headings deterministically
                for j in range(1, 721):
                    trial = heading + j * (2 * np.pi / 720)
                    cand = pos + step_len * np.array([np.cos(trial), np.sin(trial)])
                    if _in_region(cand):
                        heading = trial
                        break
                else:
                    raise RuntimeError("no legal heading from trajectory point")
                break
            if b > hi:
                heading = 2 * hi - heading
            elif b < lo:
                heading = 2 * lo - heading
            else:  # inside the sector but too close to the BS: bounce off the disc
                heading = 2 * _bearing(pos) + np.pi - heading
            tries += 1
            cand = pos + step_len * np.array([np.cos(heading), np.sin(heading)])
        pos = cand
        positions[k] = pos
    return Trajectory(times_s=times, positions_m=positions)


def channel_trace(
    traj: Trajectory,
    scene: SceneConfig,
    array: ArrayConfig,
    rng: np.random.Generator,
    meta: dict | None = None,
) -> ChannelTrace:
    """Convert a trajectory into per-sample multipath snapshots.

    LOS angle follows the UE bearing with ``|gain| = reference_gain *
    r^(-exponent/2)`` and a phase fixed per trajectory; each reflected path
    keeps a fixed angular offset and a fixed independent phase, scaled down by
    the configured relative power.
    """
    if len(traj.times_s) == 0:
        raise ValueError("trajectory must be nonempty")

    los_phase = rng.uniform(0.0, 2 * np.pi)
    n_nlos = scene.num_paths - 1
    nlos_offsets = rng.normal(0.0, scene.nlos_angle_spread_radians, size=n_nlos)
    nlos_phases = rng.uniform(0.0, 2 * np.pi, size=n_nlos)
    nlos_amp = 10.0 ** (-scene.nlos_relative_gain_db / 20.0)

    lo = AOD_SECTOR[0] + SECTOR_MARGIN_RAD
    hi = AOD_SECTOR[1] - SECTOR_MARGIN_RAD
    snapshots = []
    for t, pos in zip(traj.times_s, traj.positions_m):
        r = float(np.hypot(pos[0], pos[1]))
        if r == 0.0:
            raise ValueError(f"trajectory point at the BS position (t={t})")
        aod = _bearing(pos)
        amp = scene.reference_gain * r ** (-scene.pathloss_exponent / 2.0)
        rot = 2 * np.pi * scene.doppler_hz * t
        paths = [Path(gain=amp * np.exp(1j * (los_phase + rot)), aod_radians=aod)]
        for off, ph in zip(nlos_offsets, nlos_phases):
            nlos_aod = float(np.clip(aod + off, lo, hi))
            paths.append(
                Path(gain=amp * nlos_amp * np.exp(1j * (ph + rot)), aod_radians=nlos_aod)
            )
        snapshots.append(ChannelSnapshot(time_s=float(t), paths=tuple(paths)))
    return ChannelTrace(snapshots=tuple(snapshots), array=array, meta=meta)


def prediction_instants(stage_start_s: float, period_s: float, count: int) -> list[float]:
    """`count` instants spaced uniformly strictly inside one prediction period."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if period_s <= 0:
        raise ValueError("period_s must be positive")
    return [stage_start_s + i * period_s / (count + 1) for i in range(1, count + 1)]


# --- persistence ----------------------------------------------------------

def save_trace(trace: ChannelTrace, destination) -> None:
    """Write the binary trace format (little-endian, versioned).

    Layout: magic "BTRC", version u16, M u32, Q u32, d/lambda f64, L u32,
    snapshot count u64, then per snapshot a time f64 followed by L gain-re/
    gain-im/aod f64 triples.  Trace meta is not persisted.
    """
    close = False
    if isinstance(destination, (str, bytes)) or hasattr(destination, "__fspath__"):
        fh: BinaryIO = open(destination, "wb")
        close = True
    else:
        fh = destination
    try:
        L = len(trace.snapshots[0].paths) if trace.snapshots else 0
        fh.write(TRACE_MAGIC)
        fh.write(
            struct.pack(
                "<HIIdIQ",
                TRACE_VERSION,
                trace.array.num_antennas,
                trace.array.codebook_size,
                trace.array.element_spacing_over_wavelength,
                L,
                len(trace.snapshots),
            )
        )
        for snap in trace.snapshots:
            rec = [snap.time_s]
            for p in snap.paths:
                rec.extend((p.gain.real, p.gain.imag, p.aod_radians))
            fh.write(struct.pack(f"<{len(rec)}d", *rec))
    finally:
        if close:
            fh.close()


def load_trace(source) -> ChannelTrace:
    """Read the binary trace format; raises :class:`TraceFormatError` on damage."""
    close = False
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        fh: BinaryIO = open(source, "rb")
        close = True
    else:
        fh = source
    try:
        magic = fh.read(4)
        if len(magic) < 4 or magic != TRACE_MAGIC:
            raise TraceFormatError("missing header: expected magic 'BTRC'")
        head = fh.read(struct.calcsize("<HIIdIQ"))
        if len(head) < struct.calcsize("<HIIdIQ"):
            raise TraceFormatError("truncated header")
        version, M, Q, spacing, L, count = struct.unpack("<HIIdIQ", head)
        if version != TRACE_VERSION:
            raise TraceFormatError(
                f"unsupported trace version {version}, expected {TRACE_VERSION}"
            )
        array = ArrayConfig(
            num_antennas=M, codebook_size=Q, element_spacing_over_wavelength=spacing
        )
        rec_size = struct.calcsize(f"<{1 + 3 * L}d")
        snapshots = []
        for i in range(count):
            blob = fh.read(rec_size)
            if len(blob) < rec_size:
                raise TraceFormatError(
                    f"truncated body: snapshot {i} of {count} incomplete"
                )
            rec = struct.unpack(f"<{1 + 3 * L}d", blob)
            paths = tuple(
                Path(gain=complex(rec[1 + 3 * j], rec[2 + 3 * j]), aod_radians=rec[3 + 3 * j])
                for j in range(L)
            )
            snapshots.append(ChannelSnapshot(time_s=rec[0], paths=paths))
        return ChannelTrace(snapshots=tuple(snapshots), array=array, meta=None)
    finally:
        if close:
            fh.close()


def load_trace_table(source, array: ArrayConfig) -> ChannelTrace:
    """Import externally generated data from plain tabular text.

    One row per snapshot-path: ``time, path_index, gain_re, gain_im, aod_rad``
    (comma or whitespace separated; lines starting with '#' ignored).  Rows
    group into snapshots by time in order of first appearance; the array
    geometry is supplied by the caller because the text carries none.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r") as fh:
            lines = fh.readlines()
    else:
        lines = list(source)  # text file object or any iterable of lines

    groups: dict[float, list[tuple[int, complex, float]]] = {}
    order: list[float] = []
    for ln, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.replace(",", " ").split()
        if len(parts) != 5:
            raise TraceFormatError(f"line {ln}: expected 5 columns, got {len(parts)}")
        try:
            t = float(parts[0])
            idx = int(parts[1])
            gain = complex(float(parts[2]), float(parts[3]))
            aod = float(parts[4])
        except ValueError as exc:
            raise TraceFormatError(f"line {ln}: {exc}") from exc
        if t not in groups:
            groups[t] = []
            order.append(t)
        groups[t].append((idx, gain, aod))

    if not order:
        raise TraceFormatError("missing header: no data rows found")
    snapshots = []
    for t in order:
        rows = sorted(groups[t], key=lambda r: r[0])
        paths = tuple(Path(gain=g, aod_radians=a) for _, g, a in rows)
        snapshots.append(ChannelSnapshot(time_s=t, paths=paths))
    return ChannelTrace(snapshots=tuple(snapshots), array=array, meta=None)
