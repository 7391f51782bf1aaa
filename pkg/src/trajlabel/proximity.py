"""Proximity rewards: Min-Dist, Seg-match, Seg-window and the general window form.

Expert indices in this module's public types are 1-based, matching the
usual statement of the segment formulas; arrays handed to numpy are
converted to 0-based at the last moment.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .core import Method, Metric, RewardSeries, Stage, Trajectory, window_min_cost

Extent = Union[int, Tuple[int, ...]]


@dataclass(frozen=True)
class SegmentPartition:
    """Per-step expert segments ``[a_t, b_t]`` (1-based, inclusive).

    For ``t > T_e`` the segment is empty (``a_t > b_t``).
    """

    T: int
    T_e: int
    bounds: Tuple[Tuple[int, int], ...]

    @property
    def q(self) -> int:
        return self.T_e // self.T

    @property
    def l(self) -> int:  # noqa: E743
        return self.T_e % self.T

    def sizes(self) -> list:
        return [max(0, b - a + 1) for a, b in self.bounds]


def segment_partition(T: int, T_e: int) -> SegmentPartition:
    if T < 1 or T_e < 1:
        raise ValueError(f"need T >= 1 and T_e >= 1, got T={T}, T_e={T_e}")
    q, l = divmod(T_e, T)
    bounds = tuple(
        ((t - 1) * q + 1 + min(t - 1, l), t * q + min(t, l)) for t in range(1, T + 1)
    )
    return SegmentPartition(T, T_e, bounds)


def _extent(value, name: str):
    if isinstance(value, (int, np.integer)):
        if value < 0:
            raise ValueError(f"window extent {name} must be >= 0, got {value}")
        return int(value)
    return tuple(int(v) for v in value)


@dataclass(frozen=True)
class WindowSpec:
    """Expert window ``[floor(b*t) - a, floor(b*t) + c]`` for agent step ``t`` (1-based).

    ``b`` is held as an exact fraction so that ``floor(b*t)`` never drifts.
    ``a`` and ``c`` are normally nonnegative integers; per-step tuples (one
    entry per agent step) express the asymmetric bounds the segment
    partition needs, and those may be negative when the segment does not
    contain ``floor(b*t)``.
    """

    a: Extent
    b: Fraction
    c: Extent

    def __post_init__(self):
        b = Fraction(self.b)
        if b < 0:
            raise ValueError(f"stride b must be >= 0, got {b}")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "a", _extent(self.a, "a"))
        object.__setattr__(self, "c", _extent(self.c, "c"))

    @classmethod
    def full_span(cls, T_e: int) -> "WindowSpec":
        """``b = 0`` with the window reaching every expert state (Min-Dist)."""
        return cls(a=0, b=Fraction(0), c=T_e)

    @classmethod
    def symmetric(cls, k_w: int) -> "WindowSpec":
        """``b = 1``, ``a = c = k_w`` (Seg-window)."""
        return cls(a=k_w, b=Fraction(1), c=k_w)

    @classmethod
    def segments(cls, T: int, T_e: int) -> "WindowSpec":
        """``b = T_e / T`` with per-step extents reproducing the segment partition."""
        b = Fraction(T_e, T)
        part = segment_partition(T, T_e)
        centres = [(b.numerator * t) // b.denominator for t in range(1, T + 1)]
        a = tuple(ctr - lo for ctr, (lo, _) in zip(centres, part.bounds))
        c = tuple(hi - ctr for ctr, (_, hi) in zip(centres, part.bounds))
        return cls(a=a, b=b, c=c)

    def _per_step(self, value, T: int) -> np.ndarray:
        if isinstance(value, int):
            return np.full(T, value, dtype=np.int64)
        if len(value) != T:
            raise ValueError(f"per-step window extent has {len(value)} entries, expected {T}")
        return np.asarray(value, dtype=np.int64)

    def expert_indices(self, T: int, T_e: int) -> Tuple[np.ndarray, np.ndarray]:
        """1-based inclusive window bounds per step, clamped, with the last-state fallback."""
        t = np.arange(1, T + 1, dtype=np.int64)
        centre = (self.b.numerator * t) // self.b.denominator
        lo = np.maximum(centre - self._per_step(self.a, T), 1)
        hi = np.minimum(centre + self._per_step(self.c, T), T_e)
        empty = lo > hi
        lo[empty] = T_e
        hi[empty] = T_e
        return lo, hi


def _require_expert(tau_e: Trajectory) -> None:
    if len(tau_e) < 1:
        raise ValueError("expert trajectory is empty")


def _reward(tau, tau_e, lo1, hi1, metric, k_c, method) -> RewardSeries:
    cost = window_min_cost(tau, tau_e, lo1 - 1, hi1 - 1, metric, k_c)
    return RewardSeries(-cost, Stage.RAW, method)


def min_dist_reward(
    tau: Trajectory, tau_e: Trajectory, metric: Metric | str = Metric.COSINE
) -> RewardSeries:
    """Negative distance from each agent state to its nearest expert state."""
    _require_expert(tau_e)
    T, Te = len(tau), len(tau_e)
    lo = np.ones(T, dtype=np.int64)
    hi = np.full(T, Te, dtype=np.int64)
    return _reward(tau, tau_e, lo, hi, metric, 1, Method.MIN_DIST)


def min_dist_reward_kdtree(
    tau: Trajectory, tau_e: Trajectory, metric: Metric | str = Metric.EUCLIDEAN
) -> RewardSeries:
    """Min-Dist via a kd-tree over the expert states (Euclidean only)."""
    if Metric.parse(metric) is not Metric.EUCLIDEAN:
        raise ValueError(
            "the kd-tree path supports Euclidean distance only; "
            "use min_dist_reward for cosine"
        )
    _require_expert(tau_e)
    if tau.dim != tau_e.dim:
        raise ValueError(f"state dimension mismatch: {tau.dim} vs {tau_e.dim}")
    dist, _ = cKDTree(tau_e.states).query(tau.states, k=1)
    return RewardSeries(-np.asarray(dist, dtype=np.float64), Stage.RAW, Method.MIN_DIST)


def seg_match_reward(
    tau: Trajectory, tau_e: Trajectory, metric: Metric | str = Metric.COSINE
) -> RewardSeries:
    """Negative distance to the nearest state of the step's own expert segment.

    Steps past the expert horizon compare against the last expert state.
    """
    _require_expert(tau_e)
    bounds = segment_window_bounds(segment_partition(len(tau), len(tau_e)))
    lo = np.array([a for a, _ in bounds], dtype=np.int64)
    hi = np.array([b for _, b in bounds], dtype=np.int64)
    return _reward(tau, tau_e, lo, hi, metric, 1, Method.SEG_MATCH)


def seg_window_reward(
    tau: Trajectory,
    tau_e: Trajectory,
    metric: Metric | str = Metric.COSINE,
    k_w: int = 10,
    k_c: int = 3,
) -> RewardSeries:
    """Negative minimal context cost over expert indices ``[t - k_w, t + k_w]``."""
    _require_expert(tau_e)
    if int(k_w) != k_w or k_w < 0:
        raise ValueError(f"window half-width k_w must be a nonnegative integer, got {k_w}")
    T, Te = len(tau), len(tau_e)
    t = np.arange(1, T + 1, dtype=np.int64)
    lo = np.maximum(t - k_w, 1)
    hi = np.minimum(t + k_w, Te)
    empty = lo > hi
    lo[empty] = Te
    hi[empty] = Te
    return _reward(tau, tau_e, lo, hi, metric, k_c, Method.SEG_WINDOW)


def unified_window_reward(
    tau: Trajectory,
    tau_e: Trajectory,
    metric: Metric | str,
    spec: WindowSpec,
    k_c: int = 1,
) -> RewardSeries:
    """Negative minimal (context) cost over the window described by ``spec``."""
    _require_expert(tau_e)
    lo, hi = spec.expert_indices(len(tau), len(tau_e))
    return _reward(tau, tau_e, lo, hi, metric, k_c, Method.UNIFIED)


def segment_window_bounds(partition: SegmentPartition) -> Sequence[Tuple[int, int]]:
    """Segment bounds with the last-state fallback substituted for empty segments."""
    return [
        (a, b) if a <= b else (partition.T_e, partition.T_e) for a, b in partition.bounds
    ]
