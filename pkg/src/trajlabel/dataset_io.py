"""Line-delimited JSON trajectory datasets.

The first line is a manifest record; every following line holds one
trajectory. States are stored flat with their dimension, and every float
is written with 17 significant digits so a load/save cycle is byte-stable.
See ``docs/formats.md`` for the grammar.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import Method, Metric, RewardSeries, Stage, Trajectory

FORMAT_VERSION = 1


class DatasetError(ValueError):
    """Malformed or inconsistent dataset file."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    state_dim: int
    trajectory_count: int
    expert_ids: Tuple[str, ...]
    distance_metric: Metric = Metric.COSINE
    created_at: str = ""
    # Provenance block written by the labeller; empty for unlabeled data.
    labeling: Dict[str, Any] = field(default_factory=dict)

    def to_record(self) -> Dict[str, Any]:
        rec = {
            "kind": "manifest",
            "format_version": FORMAT_VERSION,
            "name": self.name,
            "state_dim": self.state_dim,
            "trajectory_count": self.trajectory_count,
            "expert_ids": list(self.expert_ids),
            "distance_metric": self.distance_metric.value,
            "created_at": self.created_at,
        }
        if self.labeling:
            rec["labeling"] = self.labeling
        return rec


@dataclass(frozen=True)
class LabeledDataset:
    manifest: DatasetManifest
    trajectories: Tuple[Tuple[Trajectory, Optional[RewardSeries]], ...]
    method: Optional[Method] = None
    postprocess_params: Dict[str, Any] = field(default_factory=dict)


def fmt_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise DatasetError(f"cannot serialise non-finite value {x!r}")
    if x == 0.0 and math.copysign(1.0, x) < 0:
        return "-0.0"  # "-0" would parse back as the integer 0
    return format(x, ".17g")


def _fmt_array(values: np.ndarray) -> str:
    return "[" + ",".join(fmt_float(v) for v in np.asarray(values).ravel().tolist()) + "]"


def _dump_meta(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def trajectory_line(traj: Trajectory, rewards: Optional[RewardSeries] = None) -> str:
    parts = [
        '{"kind":"trajectory"',
        f'"id":{json.dumps(traj.id)}',
        f'"dim":{traj.dim}',
        f'"states":{_fmt_array(traj.states)}',
    ]
    if traj.actions is not None:
        parts.append(f'"action_dim":{traj.actions.shape[1]}')
        parts.append(f'"actions":{_fmt_array(traj.actions)}')
    if rewards is not None:
        if len(rewards) != len(traj):
            raise DatasetError(
                f"trajectory {traj.id!r}: {len(rewards)} rewards for {len(traj)} states"
            )
        parts.append(f'"reward_stage":{json.dumps(rewards.stage.value)}')
        parts.append(f'"rewards":{_fmt_array(rewards.values)}')
    return ",".join(parts) + "}"


def _parse_trajectory(rec: Dict[str, Any], lineno: int, state_dim: int):
    if rec.get("kind") != "trajectory":
        raise DatasetError("expected a trajectory record", lineno)
    tid = rec.get("id")
    if not isinstance(tid, str) or not tid:
        raise DatasetError("trajectory id must be a non-empty string", lineno)
    dim = rec.get("dim")
    states = rec.get("states")
    if not isinstance(dim, int) or dim < 1:
        raise DatasetError(f"trajectory {tid!r}: bad dim {dim!r}", lineno)
    if dim != state_dim:
        raise DatasetError(
            f"trajectory {tid!r}: dim {dim} does not match manifest state_dim {state_dim}", lineno
        )
    if not isinstance(states, list) or not states:
        raise DatasetError(f"trajectory {tid!r}: states must be a non-empty list", lineno)
    try:
        flat = np.asarray(states, dtype=np.float64)
    except (TypeError, ValueError):
        raise DatasetError(f"trajectory {tid!r}: states must be numbers", lineno) from None
    if flat.ndim != 1 or flat.size % dim:
        raise DatasetError(
            f"trajectory {tid!r}: {flat.size} state values is not a multiple of dim {dim}", lineno
        )
    if not np.all(np.isfinite(flat)):
        raise DatasetError(f"trajectory {tid!r}: non-finite state values", lineno)
    T = flat.size // dim
    actions = None
    if "actions" in rec:
        adim = rec.get("action_dim")
        try:
            acts = np.asarray(rec["actions"], dtype=np.float64)
        except (TypeError, ValueError):
            raise DatasetError(f"trajectory {tid!r}: actions must be numbers", lineno) from None
        if not isinstance(adim, int) or adim < 1 or acts.ndim != 1 or acts.size != T * adim:
            raise DatasetError(f"trajectory {tid!r}: actions do not match {T} states", lineno)
        if not np.all(np.isfinite(acts)):
            raise DatasetError(f"trajectory {tid!r}: non-finite actions", lineno)
        actions = acts.reshape(T, adim)
    traj = Trajectory(flat.reshape(T, dim), actions, tid)
    rewards = None
    if "rewards" in rec:
        try:
            vals = np.asarray(rec["rewards"], dtype=np.float64)
        except (TypeError, ValueError):
            raise DatasetError(f"trajectory {tid!r}: rewards must be numbers", lineno) from None
        if vals.ndim != 1 or vals.size != T:
            raise DatasetError(f"trajectory {tid!r}: {vals.size} rewards for {T} states", lineno)
        if not np.all(np.isfinite(vals)):
            raise DatasetError(f"trajectory {tid!r}: non-finite rewards", lineno)
        try:
            stage = Stage(rec.get("reward_stage", "raw"))
        except ValueError:
            raise DatasetError(f"trajectory {tid!r}: unknown reward_stage", lineno) from None
        rewards = RewardSeries(vals, stage)
    return traj, rewards


def _parse_manifest(rec: Any) -> DatasetManifest:
    if not isinstance(rec, dict) or rec.get("kind") != "manifest":
        raise DatasetError("first record must be a manifest", 1)
    try:
        manifest = DatasetManifest(
            name=str(rec["name"]),
            state_dim=int(rec["state_dim"]),
            trajectory_count=int(rec["trajectory_count"]),
            expert_ids=tuple(str(e) for e in rec["expert_ids"]),
            distance_metric=Metric.parse(rec.get("distance_metric", "cosine")),
            created_at=str(rec.get("created_at", "")),
            labeling=dict(rec.get("labeling", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"bad manifest: {exc}", 1) from None
    if manifest.state_dim < 1:
        raise DatasetError("manifest state_dim must be >= 1", 1)
    return manifest


def _read(path) -> Tuple[DatasetManifest, List[Tuple[Trajectory, Optional[RewardSeries]]]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"malformed record: {exc.msg}", lineno) from None
    if not records:
        raise DatasetError("no trajectories: file is empty")
    manifest = _parse_manifest(records[0][1])
    if len(records) == 1:
        raise DatasetError("no trajectories")
    items = []
    seen = set()
    for lineno, rec in records[1:]:
        if not isinstance(rec, dict):
            raise DatasetError("record must be a JSON object", lineno)
        traj, rewards = _parse_trajectory(rec, lineno, manifest.state_dim)
        if traj.id in seen:
            raise DatasetError(f"duplicate trajectory id {traj.id!r}", lineno)
        seen.add(traj.id)
        items.append((traj, rewards))
    if len(items) != manifest.trajectory_count:
        raise DatasetError(
            f"manifest declares {manifest.trajectory_count} trajectories, file has {len(items)}"
        )
    if not manifest.expert_ids:
        raise DatasetError("manifest lists no expert_ids", 1)
    missing = [e for e in manifest.expert_ids if e not in seen]
    if missing:
        raise DatasetError(f"expert ids not in dataset: {missing}", 1)
    return manifest, items


def load_dataset(path) -> Tuple[DatasetManifest, List[Trajectory]]:
    manifest, items = _read(path)
    return manifest, [t for t, _ in items]


def load_labeled(path) -> LabeledDataset:
    manifest, items = _read(path)
    labeling = manifest.labeling
    method = Method(labeling["method"]) if "method" in labeling else None
    items = [
        (t, None if r is None else RewardSeries(r.values, r.stage, method)) for t, r in items
    ]
    return LabeledDataset(
        manifest, tuple(items), method, dict(labeling.get("postprocess", {}))
    )


def save_dataset(
    path, manifest: DatasetManifest, trajectories: Sequence[Trajectory]
) -> None:
    _write(path, manifest, [(t, None) for t in trajectories])


def save_labeled(ds: LabeledDataset, path) -> None:
    """Write ``ds`` with its provenance header; refuses mismatched reward counts."""
    labeling = dict(ds.manifest.labeling)
    if ds.method is not None:
        labeling["method"] = ds.method.value
    if ds.postprocess_params:
        labeling["postprocess"] = ds.postprocess_params
    manifest = DatasetManifest(
        ds.manifest.name,
        ds.manifest.state_dim,
        len(ds.trajectories),
        ds.manifest.expert_ids,
        ds.manifest.distance_metric,
        ds.manifest.created_at,
        labeling,
    )
    _write(path, manifest, list(ds.trajectories))


def _write(path, manifest: DatasetManifest, items) -> None:
    if len(items) != manifest.trajectory_count:
        raise DatasetError(
            f"manifest declares {manifest.trajectory_count} trajectories, got {len(items)}"
        )
    # Build every line before touching the file so validation errors leave no partial output.
    lines = [_dump_meta(manifest.to_record())]
    for traj, rewards in items:
        if traj.dim != manifest.state_dim:
            raise DatasetError(f"trajectory {traj.id!r} has dim {traj.dim}, manifest says {manifest.state_dim}")
        lines.append(trajectory_line(traj, rewards))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class DatasetStats:
    max_return: float
    min_return: float
    degenerate: bool
    reward_mean: float
    reward_min: float
    reward_max: float
    length_histogram: Dict[int, int]


def dataset_stats(
    trajs: Sequence[Trajectory], rewards: Sequence[RewardSeries]
) -> DatasetStats:
    """Return extremes, per-step reward summary and the trajectory length histogram."""
    if not trajs or not rewards:
        raise ValueError("dataset_stats needs at least one trajectory")
    if len(trajs) != len(rewards):
        raise ValueError(f"{len(rewards)} reward series for {len(trajs)} trajectories")
    for t, r in zip(trajs, rewards):
        if len(t) != len(r):
            raise ValueError(f"trajectory {t.id!r}: {len(r)} rewards for {len(t)} states")
    returns = [r.total() for r in rewards]
    steps = [v for r in rewards for v in r.values.tolist()]
    hist = Counter(len(t) for t in trajs)
    return DatasetStats(
        max_return=max(returns),
        min_return=min(returns),
        degenerate=max(returns) == min(returns),
        reward_mean=math.fsum(steps) / len(steps),
        reward_min=min(steps),
        reward_max=max(steps),
        length_histogram=dict(sorted(hist.items())),
    )
