"""Desk-scale checks that labeled rewards rank trajectories sensibly and drive imitation.

Three pieces:

* point-mass suites: a straight-line expert plus agents with Gaussian
  detours of known, increasing size; ranking fidelity is the Spearman
  correlation between labeled returns and the (negated) detour sizes;
* a deterministic gridworld where tabular Q-learning only ever sees the
  labeled reward of each finished episode (online scaling from the first
  episode);
* wall-clock probes of labeling cost versus trajectory length.
"""
from __future__ import annotations

import csv
import os
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

from .core import Method, Metric, RewardSeries, Trajectory
from .pipeline import LabelConfig, apply_squash, raw_reward
from .postprocess import OnlineScaleState, apply_online_scale, online_scale
from .proximity import min_dist_reward_kdtree

TIMING_FIELDS = ("method", "T", "d", "median_seconds", "run_id")
CURVE_FIELDS = ("episode", "labeled_return", "reached_goal")
TIMING_SINKHORN_ITERATIONS = 20000


def _label_config(method, metric, **overrides) -> LabelConfig:
    return LabelConfig(method=Method(method), metric=Metric.parse(metric), postprocess="none", **overrides)


# --------------------------------------------------------------------------- point mass


@dataclass(frozen=True)
class PointMassTask:
    start: Tuple[float, float] = (0.0, 0.0)
    goal: Tuple[float, float] = (1.0, 1.0)
    horizon: int = 50
    noise_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")

    def expert(self) -> Trajectory:
        s = np.linspace(0.0, 1.0, self.horizon)[:, None]
        path = (1 - s) * np.asarray(self.start, float) + s * np.asarray(self.goal, float)
        return Trajectory(path, id="expert")


@dataclass(frozen=True, eq=False)
class PointMassSuite:
    expert: Trajectory
    agents: Tuple[Trajectory, ...]
    detours: Tuple[float, ...]


def gen_pointmass_suite(task: PointMassTask, n_agents: int) -> PointMassSuite:
    """Agent ``i`` is the expert path plus i.i.d. Gaussian offsets of scale
    ``noise_scale * (i + 1)``."""
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")
    rng = np.random.default_rng(task.seed)
    expert = task.expert()
    agents, detours = [], []
    for i in range(n_agents):
        mag = task.noise_scale * (i + 1)
        noise = rng.standard_normal(expert.states.shape)
        agents.append(Trajectory(expert.states + mag * noise, id=f"agent{i:03d}"))
        detours.append(mag)
    return PointMassSuite(expert, tuple(agents), tuple(detours))


def labeled_returns(
    method, suite: PointMassSuite, metric=Metric.EUCLIDEAN, squashed: bool = False
) -> List[float]:
    cfg = _label_config(method, metric)
    out = []
    for agent in suite.agents:
        r = raw_reward(agent, suite.expert, cfg)
        if squashed:
            r = apply_squash(r, agent, cfg)
        out.append(r.total())
    return out


def ranking_fidelity(method, suite: PointMassSuite, metric=Metric.EUCLIDEAN) -> float:
    """Spearman correlation between labeled returns and the true quality order.

    ``method`` is a method name or a callable ``(agent, expert) -> RewardSeries``.
    """
    if len(suite.agents) < 2 or len(set(suite.detours)) < 2:
        raise ValueError("degenerate suite: need agents with distinct detours")
    if callable(method):
        rets = [method(a, suite.expert).total() for a in suite.agents]
    else:
        rets = labeled_returns(method, suite, metric)
    if len(set(rets)) < 2:
        raise ValueError("degenerate labeling: every agent received the same return")
    rho = spearmanr(rets, [-d for d in suite.detours]).statistic
    if not np.isfinite(rho):
        raise ValueError("rank correlation undefined for this labeling")
    return float(rho)


def reversal_instance(
    task: PointMassTask, offset: Tuple[float, float] = (0.0, 0.05)
) -> Tuple[Trajectory, Trajectory, Trajectory]:
    """Expert, an agent shadowing it at a constant offset, and that agent played backwards."""
    expert = task.expert()
    forward = Trajectory(expert.states + np.asarray(offset, float), id="forward")
    return expert, forward, forward.reversed(id="reversed")


# --------------------------------------------------------------------------- gridworld

ACTIONS = ((0, -1), (0, 1), (-1, 0), (1, 0))  # up, down, left, right as (dx, dy)


@dataclass(frozen=True)
class Gridworld:
    width: int = 8
    height: int = 8
    goal_cell: Optional[int] = None
    step_limit: int = 64
    start_cell: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.step_limit < 1:
            raise ValueError("width, height and step_limit must be positive")
        if self.goal_cell is None:
            object.__setattr__(self, "goal_cell", self.n_cells - 1)
        for c in (self.goal_cell, self.start_cell):
            if not 0 <= c < self.n_cells:
                raise ValueError(f"cell {c} outside the grid")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def step(self, cell: int, action: int) -> int:
        x, y = cell % self.width, cell // self.width
        dx, dy = ACTIONS[action]
        x = min(max(x + dx, 0), self.width - 1)
        y = min(max(y + dy, 0), self.height - 1)
        return y * self.width + x

    def embed(self, cells: Sequence[int]) -> np.ndarray:
        out = np.zeros((len(cells), self.n_cells))
        out[np.arange(len(cells)), np.asarray(cells, dtype=np.int64)] = 1.0
        return out

    def decode(self, traj: Trajectory) -> List[int]:
        return [int(i) for i in np.argmax(traj.states, axis=1)]

    def expert_demo(self) -> Trajectory:
        """Shortest path: along the start row to the goal column, then to the goal row."""
        cells = [self.start_cell]
        gx, gy = self.goal_cell % self.width, self.goal_cell // self.width
        while cells[-1] != self.goal_cell:
            x, y = cells[-1] % self.width, cells[-1] // self.width
            action = 3 if x < gx else 2 if x > gx else 1 if y < gy else 0
            cells.append(self.step(cells[-1], action))
        return Trajectory(self.embed(cells), id="expert")


@dataclass(frozen=True)
class QLearnerConfig:
    episodes: int = 5000
    learning_rate: float = 0.5
    discount: float = 0.99
    exploration_epsilon: float = 0.1
    seed: int = 0
    # Key the table by (timestep, cell). Time-aligned rewards such as
    # Seg-match are only Markov in that joint state.
    time_indexed: bool = True

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not 0 < self.learning_rate <= 1 or not 0 < self.discount <= 1:
            raise ValueError("learning_rate and discount must lie in (0, 1]")
        if not 0 <= self.exploration_epsilon <= 1:
            raise ValueError("exploration_epsilon must lie in [0, 1]")


@dataclass
class ImitationResult:
    success_rate: float
    q_table: np.ndarray
    online_scale: Optional[float]
    curve: List[Tuple[int, float, bool]] = field(default_factory=list)


RANDOM_REWARD = "random"
GROUND_TRUTH = "ground-truth"


def _greedy(q_row: np.ndarray, rng: np.random.Generator) -> int:
    best = np.flatnonzero(q_row == q_row.max())
    return int(best[0]) if best.size == 1 else int(rng.choice(best))


def _check_expert(env: Gridworld, expert: Trajectory) -> None:
    if expert.dim != env.n_cells:
        raise ValueError(f"expert states have dim {expert.dim}, grid has {env.n_cells} cells")
    cells = env.decode(expert)
    if cells[-1] != env.goal_cell or len(cells) - 1 > env.step_limit:
        raise ValueError("expert demonstration does not reach the goal within the step limit")
    for a, b in zip(cells, cells[1:]):
        if b not in {env.step(a, k) for k in range(len(ACTIONS))}:
            raise ValueError("expert demonstration contains an impossible transition")


def gridworld_imitation(
    method,
    env: Gridworld,
    expert: Trajectory,
    cfg: QLearnerConfig,
    metric=Metric.EUCLIDEAN,
    eval_episodes: int = 100,
) -> ImitationResult:
    """Tabular Q-learning driven only by labeled rewards; returns greedy success rate.

    ``method`` is a labeling method name, ``"random"`` (Gaussian noise
    rewards) or ``"ground-truth"`` (1 on reaching the goal). Each finished
    episode is labeled against ``expert``; the reward for a transition is
    the label of the state it lands in. Labeled rewards are scaled by the
    factor frozen from the first episode.
    """
    _check_expert(env, expert)
    rng = np.random.default_rng(cfg.seed)
    eval_rng = np.random.default_rng(cfg.seed + 1)
    label_cfg = None
    if method not in (RANDOM_REWARD, GROUND_TRUTH):
        label_cfg = _label_config(method, metric)
    horizon = env.step_limit if cfg.time_indexed else 1
    Q = np.zeros((horizon, env.n_cells, len(ACTIONS)))

    def row(k: int, cell: int) -> np.ndarray:
        return Q[k if cfg.time_indexed else 0, cell]

    scale_state = OnlineScaleState()
    curve = []
    for episode in range(cfg.episodes):
        cells, actions = [env.start_cell], []
        for k in range(env.step_limit):
            s = cells[-1]
            if rng.random() < cfg.exploration_epsilon:
                a = int(rng.integers(len(ACTIONS)))
            else:
                a = _greedy(row(k, s), rng)
            actions.append(a)
            cells.append(env.step(s, a))
            if cells[-1] == env.goal_cell:
                break
        reached = cells[-1] == env.goal_cell
        n = len(actions)
        if method == RANDOM_REWARD:
            rewards = rng.standard_normal(n)
        elif method == GROUND_TRUTH:
            rewards = np.zeros(n)
            rewards[-1] = 1.0 if reached else 0.0
        else:
            labels = raw_reward(Trajectory(env.embed(cells)), expert, label_cfg)
            emitted = RewardSeries(labels.values[1:], labels.stage, labels.method)
            if scale_state.scale is None:
                scale_state = online_scale(emitted, scale_state)
            rewards = apply_online_scale(emitted, scale_state).values
        for k in range(n - 1, -1, -1):
            s, a, s2 = cells[k], actions[k], cells[k + 1]
            # Reaching the goal ends the episode; so does the step limit when
            # the table is time-indexed, because no later row exists.
            last = k == n - 1 and (reached or cfg.time_indexed and k + 1 >= horizon)
            target = rewards[k] + (0.0 if last else cfg.discount * row(k + 1, s2).max())
            q = row(k, s)
            q[a] += cfg.learning_rate * (target - q[a])
        curve.append((episode, float(np.sum(rewards)), bool(reached)))

    successes = 0
    for _ in range(eval_episodes):
        s = env.start_cell
        for k in range(env.step_limit):
            s = env.step(s, _greedy(row(k, s), eval_rng))
            if s == env.goal_cell:
                successes += 1
                break
    return ImitationResult(successes / eval_episodes, Q, scale_state.scale, curve)


def write_curve_csv(result: ImitationResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for ep, ret, ok in result.curve:
            w.writerow((ep, repr(ret), int(ok)))


# --------------------------------------------------------------------------- timing


def synthetic_pair(T: int, d: int = 4, seed: int = 0) -> Tuple[Trajectory, Trajectory]:
    """Smooth expert curve sampled at ``T`` points and a perturbed agent copy.

    The curve is fixed by ``seed`` and ``d`` only, so growing ``T`` refines
    the same geometry rather than producing a different problem.
    """
    rng = np.random.default_rng(seed)
    freq = rng.uniform(0.5, 2.0, size=d)
    phase = rng.uniform(0, 2 * np.pi, size=d)
    s = np.linspace(0.0, 1.0, T)[:, None]
    expert = 1.5 + np.sin(2 * np.pi * freq * s + phase)
    agent = 1.5 + np.sin(2 * np.pi * freq * (0.9 * s + 0.05) + phase + 0.1)
    return Trajectory(agent, id="agent"), Trajectory(expert, id="expert")


def _timed_labeler(method, metric) -> Callable[[Trajectory, Trajectory], RewardSeries]:
    if method == "min-dist-kdtree":
        return lambda a, e: min_dist_reward_kdtree(a, e)
    extra = {}
    if Method(method) in (Method.OT, Method.TEMPORAL_OT):
        # Coarse samples of a smooth curve converge slowly at the default cap.
        extra["max_iterations"] = TIMING_SINKHORN_ITERATIONS
    cfg = _label_config(method, metric, **extra)
    return lambda a, e: raw_reward(a, e, cfg)


def timing_probe(
    method,
    sizes: Sequence[int],
    d: int = 4,
    repeats: int = 5,
    seed: int = 0,
    metric=Metric.EUCLIDEAN,
) -> List[Tuple[int, float]]:
    """Median-of-``repeats`` wall time of labeling one ``T``-step trajectory against a
    ``T``-step expert, for each ``T`` in ``sizes``."""
    sizes = list(sizes)
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be strictly increasing")
    label = _timed_labeler(method, metric)
    rows = []
    for T in sizes:
        agent, expert = synthetic_pair(T, d, seed)
        label(agent, expert)  # warm-up
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            label(agent, expert)
            times.append(time.perf_counter() - t0)
        rows.append((T, statistics.median(times)))
    return rows


def write_timing_csv(rows, path, run_id: str) -> None:
    """Append ``(method, T, d, median_seconds)`` rows tagged with ``run_id``."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(TIMING_FIELDS)
        for method, T, d, secs in rows:
            w.writerow((method, T, d, f"{secs:.6e}", run_id))
