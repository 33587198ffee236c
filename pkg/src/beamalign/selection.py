"""Candidate-beam set construction for the tracking mode.

The DFT codebook is periodic in its phase slope, so beam indices live on a
ring of size Q; every window here wraps modulo Q.  "Increasing" direction
means increasing codeword index.  Local indices are 1-based positions inside
a candidate set's construction order: reserve beams first (walking toward the
anchor), then the anchor and the beams extending in the movement direction.
Reversing the direction mirrors the set exactly (all circular offsets negate,
including list order).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Direction(enum.Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class CandidateSet:
    """The probed beam subset; tuple order defines local indices."""

    global_indices: tuple[int, ...]
    strategy_tag: str
    reserve_count: int = 0

    def __post_init__(self):
        if self.strategy_tag not in ("even", "uneven", "interleaved"):
            raise ValueError(f"unknown strategy tag {self.strategy_tag!r}")
        if len(set(self.global_indices)) != len(self.global_indices):
            raise ValueError("candidate set contains duplicate beam indices")
        if not self.global_indices:
            raise ValueError("candidate set must not be empty")
        if not 0 <= self.reserve_count <= len(self.global_indices):
            raise ValueError("reserve_count outside [0, size]")

    @property
    def size(self) -> int:
        return len(self.global_indices)


def _wrap(index: int, Q: int) -> int:
    return (index - 1) % Q + 1


def circular_offset(a: int, b: int, Q: int) -> int:
    """Signed ring distance from b to a, in [-Q//2, Q - Q//2 - 1]."""
    return (a - b + Q // 2) % Q - Q // 2


def estimate_direction(recent_optima: list[int], Q: int) -> Direction:
    """Drift direction from the last two recorded stage optima.

    The two-stage window is the shortest one that defines a sign; a single
    observation or zero net drift gives UNKNOWN.
    """
    if not recent_optima:
        raise ValueError("recent_optima must not be empty")
    if len(recent_optima) < 2:
        return Direction.UNKNOWN
    first, last = recent_optima[-2], recent_optima[-1]
    delta = (last - first + Q // 2) % Q - Q // 2
    if delta > 0:
        return Direction.INCREASING
    if delta < 0:
        return Direction.DECREASING
    return Direction.UNKNOWN


def even_coverage(q_prev: int, size: int, Q: int) -> CandidateSet:
    """Window of `size` beams centered on the previous optimum.

    Even sizes put the extra beam on the increasing side.
    """
    _check_common(q_prev, size, Q)
    offsets = range(-((size - 1) // 2), size // 2 + 1)
    indices = tuple(_wrap(q_prev + off, Q) for off in offsets)
    return CandidateSet(indices, "even", reserve_count=0)


def uneven_coverage(
    q_prev: int, size: int, Q: int, J0: int, direction: Direction
) -> CandidateSet:
    """`size - J0` beams extending from the anchor in the movement direction,
    with J0 beams reserved immediately on the opposite side.

    UNKNOWN direction falls back to :func:`even_coverage`.
    """
    _check_common(q_prev, size, Q)
    _check_reserve(J0, size)
    if direction is Direction.UNKNOWN:
        return even_coverage(q_prev, size, Q)
    sign = 1 if direction is Direction.INCREASING else -1
    reserve = [q_prev - sign * off for off in range(J0, 0, -1)]
    forward = [q_prev + sign * off for off in range(size - J0)]
    indices = tuple(_wrap(i, Q) for i in reserve + forward)
    return CandidateSet(indices, "uneven", reserve_count=J0)


def interleaved_coverage(
    q_prev: int, size: int, Q: int, J0: int, direction: Direction
) -> CandidateSet:
    """Same split as uneven coverage but selecting every other codeword."""
    _check_common(q_prev, size, Q)
    if 2 * size > Q:
        raise ValueError(f"stride-2 window needs 2*size <= Q, got size={size} Q={Q}")
    if direction is Direction.UNKNOWN:
        offsets = range(-((size - 1) // 2), size // 2 + 1)
        indices = tuple(_wrap(q_prev + 2 * off, Q) for off in offsets)
        return CandidateSet(indices, "interleaved", reserve_count=0)
    _check_reserve(J0, size)
    sign = 1 if direction is Direction.INCREASING else -1
    reserve = [q_prev - 2 * sign * off for off in range(J0, 0, -1)]
    forward = [q_prev + 2 * sign * off for off in range(size - J0)]
    indices = tuple(_wrap(i, Q) for i in reserve + forward)
    return CandidateSet(indices, "interleaved", reserve_count=J0)


def to_global(local_index: int, cs: CandidateSet) -> int:
    """Global codebook index for a 1-based local position."""
    if not 1 <= local_index <= cs.size:
        raise ValueError(f"local index {local_index} outside [1, {cs.size}]")
    return cs.global_indices[local_index - 1]


def to_local(global_index: int, cs: CandidateSet) -> int | None:
    """1-based position of a global index inside the set, or None if absent."""
    try:
        return cs.global_indices.index(global_index) + 1
    except ValueError:
        return None


def nearest_in_set(global_index: int, cs: CandidateSet, Q: int,
                   direction: Direction = Direction.UNKNOWN) -> int:
    """Member of the set circularly nearest to a global index.

    Distance ties resolve toward the movement direction (increasing side when
    the direction is unknown).
    """
    sign = -1 if direction is Direction.DECREASING else 1
    best = None
    for g in cs.global_indices:
        off = circular_offset(g, global_index, Q)
        key = (abs(off), 0 if off * sign >= 0 else 1, g)
        if best is None or key < best[0]:
            best = (key, g)
    return best[1]


def _check_common(q_prev: int, size: int, Q: int) -> None:
    if not 1 <= q_prev <= Q:
        raise ValueError(f"q_prev {q_prev} outside [1, {Q}]")
    if not 1 <= size <= Q:
        raise ValueError(f"candidate size {size} outside [1, {Q}]")


def _check_reserve(J0: int, size: int) -> None:
    if not 1 <= J0 < size:
        raise ValueError(f"reserve count {J0} must satisfy 1 <= J0 < size ({size})")
