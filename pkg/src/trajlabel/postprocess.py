"""Reward post-processing: exponential squashing, offline rescaling, online scaling,
and expert selection.

Stages are checked on every call so a series cannot be squashed twice or
rescaled before it is squashed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import RewardSeries, Stage, Trajectory

OFFLINE_RETURN_SPAN = 1000.0
AUTO_REW_SCALE_FACTOR = 10.0


@dataclass(frozen=True)
class SquashParams:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"alpha and beta must be > 0, got {self.alpha}, {self.beta}")


# OT-family rewards use alpha = beta = 5; the simple rewards use 1.
OT_SQUASH = SquashParams(5.0, 5.0)
SIMPLE_SQUASH = SquashParams(1.0, 1.0)


@dataclass(frozen=True)
class OfflineScaleParams:
    reward_scale: float
    reward_bias: float
    max_return: float
    min_return: float


@dataclass(frozen=True)
class OnlineScaleState:
    scale: Optional[float] = None
    auto_rew_scale_factor: float = AUTO_REW_SCALE_FACTOR


def _expect_stage(r: RewardSeries, *stages: Stage) -> None:
    if r.stage not in stages:
        names = "/".join(s.value for s in stages)
        raise ValueError(f"expected a {names} reward series, got stage {r.stage.value!r}")


def squash(r: RewardSeries, p: SquashParams = SIMPLE_SQUASH) -> RewardSeries:
    """``alpha * exp(beta * r)`` elementwise."""
    _expect_stage(r, Stage.RAW)
    return RewardSeries(p.alpha * np.exp(p.beta * r.values), Stage.SQUASHED, r.method)


def squash_otr_variant(r: RewardSeries, T: int, d: int) -> RewardSeries:
    """``5 * exp(5 * T * r / d)``: the OT-reward squash normalised by episode
    length ``T`` and state dimension ``d``."""
    _expect_stage(r, Stage.RAW)
    if T < 1 or d < 1:
        raise ValueError(f"T and d must be positive, got T={T}, d={d}")
    return RewardSeries(5.0 * np.exp(5.0 * T * r.values / d), Stage.SQUASHED, r.method)


def offline_rescale(
    dataset_rewards: Sequence[RewardSeries], bias: float = 0.0
) -> Tuple[List[RewardSeries], OfflineScaleParams]:
    """Affine rescale so the dataset's return span becomes 1000, then add ``bias`` per step."""
    if len(dataset_rewards) < 2:
        raise ValueError("offline rescaling needs at least two trajectories")
    for r in dataset_rewards:
        _expect_stage(r, Stage.SQUASHED)
    returns = [r.total() for r in dataset_rewards]
    hi, lo = max(returns), min(returns)
    if not hi > lo:
        raise ValueError(
            f"degenerate dataset: every trajectory has return {hi!r}; cannot rescale"
        )
    scale = OFFLINE_RETURN_SPAN / (hi - lo)
    params = OfflineScaleParams(scale, float(bias), hi, lo)
    out = [
        RewardSeries(scale * r.values + bias, Stage.RESCALED, r.method) for r in dataset_rewards
    ]
    return out, params


def online_scale(first_episode: RewardSeries, state: OnlineScaleState) -> OnlineScaleState:
    """Freeze ``scale = auto_rew_scale_factor / sum |r|`` from the first episode."""
    if state.scale is not None:
        raise ValueError("online reward scale is already frozen for this run")
    _expect_stage(first_episode, Stage.RAW, Stage.SQUASHED)
    total = math.fsum(np.abs(first_episode.values).tolist())
    if total == 0.0:
        raise ValueError("degenerate first episode: sum of |rewards| is zero")
    return replace(state, scale=state.auto_rew_scale_factor / total)


def apply_online_scale(r: RewardSeries, state: OnlineScaleState) -> RewardSeries:
    if state.scale is None:
        raise ValueError("online reward scale has not been set")
    _expect_stage(r, Stage.RAW, Stage.SQUASHED)
    return RewardSeries(state.scale * r.values, Stage.RESCALED, r.method)


def _argmax_first(values: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def select_best_expert(per_expert: Sequence[RewardSeries]) -> Tuple[int, RewardSeries]:
    """Candidate with the largest total reward; ties go to the lowest index."""
    if len(per_expert) == 0:
        raise ValueError("no candidate reward series")
    if len({len(r) for r in per_expert}) != 1:
        raise ValueError("candidate reward series differ in length")
    idx = _argmax_first([r.total() for r in per_expert])
    return idx, per_expert[idx]


def select_expert_demo(dataset: Sequence[Trajectory], returns: Sequence[float]) -> int:
    """Index of the trajectory with the highest ground-truth return (lowest index on ties)."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if len(returns) != len(dataset):
        raise ValueError(f"{len(returns)} returns for {len(dataset)} trajectories")
    return _argmax_first([float(v) for v in returns])
