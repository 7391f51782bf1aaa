"""Trajectories, state distances and cost matrices."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

# Rough cap on the number of float64 elements materialised per chunk when
# building distance blocks.
_CHUNK_ELEMS = 1 << 22


class Metric(str, enum.Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"

    @classmethod
    def parse(cls, value: "Metric | str") -> "Metric":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown distance metric {value!r}") from None


class Stage(str, enum.Enum):
    RAW = "raw"
    SQUASHED = "squashed"
    RESCALED = "rescaled"


class Method(str, enum.Enum):
    OT = "ot"
    TEMPORAL_OT = "temporal-ot"
    MIN_DIST = "min-dist"
    SEG_MATCH = "seg-match"
    SEG_WINDOW = "seg-window"
    UNIFIED = "unified"


def _as_state_array(states, name: str) -> np.ndarray:
    arr = np.array(states, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a (T, d) array, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one state")
    if arr.shape[1] < 1:
        raise ValueError(f"{name} must have state dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """An ordered sequence of states, optionally paired with actions.

    ``states`` is stored as a read-only ``(T, d)`` float64 array. A 1-D input
    is read as ``T`` one-dimensional states.
    """

    states: np.ndarray
    actions: Optional[np.ndarray] = None
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "states", _as_state_array(self.states, "states"))
        if self.actions is not None:
            acts = np.array(self.actions, dtype=np.float64)
            if acts.ndim == 1:
                acts = acts.reshape(-1, 1)
            if acts.shape[0] != self.states.shape[0]:
                raise ValueError(
                    f"trajectory {self.id!r}: {acts.shape[0]} actions for "
                    f"{self.states.shape[0]} states"
                )
            if not np.all(np.isfinite(acts)):
                raise ValueError(f"trajectory {self.id!r}: non-finite actions")
            acts.setflags(write=False)
            object.__setattr__(self, "actions", acts)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def reversed(self, id: Optional[str] = None) -> "Trajectory":
        acts = None if self.actions is None else self.actions[::-1]
        return Trajectory(self.states[::-1], acts, self.id if id is None else id)


@dataclass(frozen=True, eq=False)
class RewardSeries:
    """Per-step rewards for one trajectory, tagged with how they were made."""

    values: np.ndarray
    stage: Stage = Stage.RAW
    method: Optional[Method] = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).reshape(-1)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "stage", Stage(self.stage))
        if self.method is not None:
            object.__setattr__(self, "method", Method(self.method))

    def __len__(self) -> int:
        return self.values.shape[0]

    def total(self) -> float:
        """Correctly rounded sum of the rewards (order independent)."""
        return math.fsum(self.values.tolist())


def paired_distance(x: np.ndarray, y: np.ndarray, metric: Metric | str) -> np.ndarray:
    """Distance between matching rows of ``x`` and ``y`` (broadcast on the last axis).

    Every reward in the package funnels through this function, so two routes
    that compare the same pair of states produce bit-identical costs.
    """
    metric = Metric.parse(metric)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    if metric is Metric.EUCLIDEAN:
        diff = x - y
        return np.sqrt(np.sum(diff * diff, axis=-1))
    nx = np.sqrt(np.sum(x * x, axis=-1))
    ny = np.sqrt(np.sum(y * y, axis=-1))
    denom = nx * ny
    dot = np.sum(x * y, axis=-1)
    degenerate = denom == 0.0
    if np.any(degenerate):
        warnings.warn(
            "cosine distance with a zero-norm state; using distance 1",
            RuntimeWarning,
            stacklevel=2,
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.where(degenerate, 0.0, dot / np.where(degenerate, 1.0, denom))
    return np.clip(1.0 - sim, 0.0, 2.0)


def distance(x: Sequence[float], y: Sequence[float], metric: Metric | str) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.size == 0:
        raise ValueError("states must have dimension >= 1")
    return float(paired_distance(x, y, metric))


def _check_dims(tau: Trajectory, tau_e: Trajectory) -> None:
    if tau.dim != tau_e.dim:
        raise ValueError(
            f"state dimension mismatch: trajectory has d={tau.dim}, "
            f"expert has d={tau_e.dim}"
        )


def pairwise_cost(tau: Trajectory, tau_e: Trajectory, metric: Metric | str) -> np.ndarray:
    """Dense ``(T, T_e)`` matrix of state distances."""
    _check_dims(tau, tau_e)
    X, Y = tau.states, tau_e.states
    T, Te, d = X.shape[0], Y.shape[0], X.shape[1]
    out = np.empty((T, Te), dtype=np.float64)
    rows = max(1, _CHUNK_ELEMS // max(1, Te * d))
    for start in range(0, T, rows):
        stop = min(T, start + rows)
        out[start:stop] = paired_distance(X[start:stop, None, :], Y[None, :, :], metric)
    return out


def context_cost(
    tau: Trajectory, tau_e: Trajectory, metric: Metric | str, k_c: int
) -> np.ndarray:
    """Pairwise cost averaged over ``k_c`` forward-aligned offsets.

    Offsets running past the end of either trajectory are clamped to its
    last state, so ``k_c = 1`` reproduces :func:`pairwise_cost` exactly.
    """
    if int(k_c) != k_c or k_c < 1:
        raise ValueError(f"context length k_c must be a positive integer, got {k_c}")
    k_c = int(k_c)
    base = pairwise_cost(tau, tau_e, metric)
    T, Te = base.shape
    rows, cols = np.arange(T), np.arange(Te)
    acc = np.zeros_like(base)
    for h in range(k_c):
        acc += base[np.minimum(rows + h, T - 1)][:, np.minimum(cols + h, Te - 1)]
    return acc / k_c


def window_min_cost(
    tau: Trajectory,
    tau_e: Trajectory,
    lo: np.ndarray,
    hi: np.ndarray,
    metric: Metric | str,
    k_c: int = 1,
) -> np.ndarray:
    """For each agent step t, the minimum (context) cost over expert indices ``lo[t]..hi[t]``.

    Indices are 0-based and inclusive; every window must be non-empty. Work
    is proportional to the total window size, not to ``T * T_e``.
    """
    _check_dims(tau, tau_e)
    if int(k_c) != k_c or k_c < 1:
        raise ValueError(f"context length k_c must be a positive integer, got {k_c}")
    k_c = int(k_c)
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    T, Te = len(tau), len(tau_e)
    if lo.shape != (T,) or hi.shape != (T,):
        raise ValueError("window bounds must have one entry per agent step")
    if np.any(lo > hi) or np.any(lo < 0) or np.any(hi >= Te):
        raise ValueError("window bounds must be non-empty and inside the expert trajectory")
    X, Y = tau.states, tau_e.states
    width = int(np.max(hi - lo)) + 1
    rows = max(1, _CHUNK_ELEMS // max(1, width * X.shape[1] * k_c))
    offsets = np.arange(width)
    out = np.empty(T, dtype=np.float64)
    for start in range(0, T, rows):
        stop = min(T, start + rows)
        t = np.arange(start, stop)
        idx = lo[start:stop, None] + offsets[None, :]
        valid = idx <= hi[start:stop, None]
        idx = np.minimum(idx, hi[start:stop, None])
        acc = np.zeros(idx.shape, dtype=np.float64)
        for h in range(k_c):
            xs = X[np.minimum(t + h, T - 1)][:, None, :]
            ys = Y[np.minimum(idx + h, Te - 1)]
            acc += paired_distance(xs, ys, metric)
        cost = acc / k_c
        cost[~valid] = np.inf
        out[start:stop] = cost.min(axis=1)
    return out
