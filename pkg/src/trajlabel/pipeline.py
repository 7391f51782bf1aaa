"""Labeling configuration and the dataset labeling pipeline."""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

from . import __version__
from .core import Method, Metric, RewardSeries, Trajectory
from .dataset_io import DatasetManifest, LabeledDataset
from .ot import SinkhornConfig, ot_reward, temporal_ot_reward
from .postprocess import (
    OT_SQUASH,
    SIMPLE_SQUASH,
    OnlineScaleState,
    SquashParams,
    apply_online_scale,
    offline_rescale,
    online_scale,
    select_best_expert,
    squash,
    squash_otr_variant,
)
from .proximity import (
    WindowSpec,
    min_dist_reward,
    seg_match_reward,
    seg_window_reward,
    unified_window_reward,
)

OT_METHODS = (Method.OT, Method.TEMPORAL_OT)
SQUASH_KINDS = ("exp", "otr", "none")
POSTPROCESS_KINDS = ("none", "offline", "online")

# Which optional knobs each method consumes; anything else set explicitly is a
# configuration error.
METHOD_KNOBS = {
    Method.OT: {"epsilon", "max_iterations", "marginal_tolerance"},
    Method.TEMPORAL_OT: {"epsilon", "max_iterations", "marginal_tolerance", "k_c", "k_m", "lenient_lengths"},
    Method.MIN_DIST: set(),
    Method.SEG_MATCH: set(),
    Method.SEG_WINDOW: {"k_w", "k_c"},
    Method.UNIFIED: {"window_a", "window_b", "window_c", "k_c"},
}
METHOD_SPECIFIC = set().union(*METHOD_KNOBS.values())


class ConfigError(ValueError):
    """Inconsistent labeling configuration."""


@dataclass(frozen=True)
class LabelConfig:
    method: Method = Method.SEG_MATCH
    metric: Metric = Metric.COSINE
    squash: str = "exp"
    alpha: Optional[float] = None
    beta: Optional[float] = None
    k_c: int = 3
    k_m: int = 10
    k_w: int = 10
    window_a: int = 0
    window_b: str = "1"
    window_c: int = 0
    epsilon: float = 0.01
    max_iterations: int = 1000
    marginal_tolerance: float = 1e-6
    lenient_lengths: bool = False
    postprocess: str = "offline"
    reward_bias: float = 0.0
    auto_rew_scale_factor: float = 10.0
    include_experts: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        object.__setattr__(self, "window_b", str(Fraction(str(self.window_b))))
        if self.squash not in SQUASH_KINDS:
            raise ConfigError(f"squash must be one of {SQUASH_KINDS}, got {self.squash!r}")
        if self.postprocess not in POSTPROCESS_KINDS:
            raise ConfigError(f"postprocess must be one of {POSTPROCESS_KINDS}, got {self.postprocess!r}")
        if self.postprocess == "offline" and self.squash == "none":
            raise ConfigError("offline rescaling applies to squashed rewards; pick a squash")
        if self.squash == "otr" and self.method not in OT_METHODS:
            raise ConfigError("the otr squash variant is defined for ot/temporal-ot only")
        if self.squash != "exp" and (self.alpha is not None or self.beta is not None):
            raise ConfigError("alpha/beta only apply to the exp squash")
        for name in ("k_c", "k_w", "k_m"):
            v = getattr(self, name)
            if int(v) != v or v < (1 if name == "k_c" else 0):
                raise ConfigError(f"{name} out of range: {v}")
        try:
            self.sinkhorn_config()
            self.squash_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_explicit(cls, explicit: Dict[str, Any]) -> "LabelConfig":
        """Build a config from explicitly supplied settings, rejecting knobs the method ignores."""
        method = Method(explicit.get("method", cls.method))
        stray = sorted(k for k in explicit if k in METHOD_SPECIFIC - METHOD_KNOBS[method])
        if stray:
            raise ConfigError(
                f"option(s) {', '.join(stray)} do not apply to method {method.value!r}"
            )
        unknown = sorted(set(explicit) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown setting(s): {', '.join(unknown)}")
        return cls(**explicit)

    def squash_params(self) -> SquashParams:
        default = OT_SQUASH if self.method in OT_METHODS else SIMPLE_SQUASH
        return SquashParams(
            default.alpha if self.alpha is None else self.alpha,
            default.beta if self.beta is None else self.beta,
        )

    def sinkhorn_config(self) -> SinkhornConfig:
        return SinkhornConfig(self.epsilon, self.max_iterations, self.marginal_tolerance)

    def window_spec(self) -> WindowSpec:
        return WindowSpec(self.window_a, Fraction(self.window_b), self.window_c)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["method"] = self.method.value
        d["metric"] = self.metric.value
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def raw_reward(tau: Trajectory, tau_e: Trajectory, cfg: LabelConfig) -> RewardSeries:
    m = cfg.method
    if m is Method.OT:
        return ot_reward(tau, tau_e, cfg.metric, cfg.sinkhorn_config())
    if m is Method.TEMPORAL_OT:
        return temporal_ot_reward(
            tau, tau_e, cfg.metric, cfg.k_c, cfg.k_m, cfg.sinkhorn_config(),
            strict=not cfg.lenient_lengths,
        )
    if m is Method.MIN_DIST:
        return min_dist_reward(tau, tau_e, cfg.metric)
    if m is Method.SEG_MATCH:
        return seg_match_reward(tau, tau_e, cfg.metric)
    if m is Method.SEG_WINDOW:
        return seg_window_reward(tau, tau_e, cfg.metric, cfg.k_w, cfg.k_c)
    return unified_window_reward(tau, tau_e, cfg.metric, cfg.window_spec(), cfg.k_c)


def label_against_experts(
    tau: Trajectory, experts: Sequence[Trajectory], cfg: LabelConfig
) -> Tuple[int, RewardSeries]:
    """Raw rewards against every expert; keeps the set with the largest total."""
    candidates = [raw_reward(tau, e, cfg) for e in experts]
    return select_best_expert(candidates)


def apply_squash(r: RewardSeries, tau: Trajectory, cfg: LabelConfig) -> RewardSeries:
    if cfg.squash == "none":
        return r
    if cfg.squash == "otr":
        return squash_otr_variant(r, len(tau), tau.dim)
    return squash(r, cfg.squash_params())


def label_dataset(
    manifest: DatasetManifest,
    trajectories: Sequence[Trajectory],
    cfg: LabelConfig,
    workers: int = 1,
) -> LabeledDataset:
    """Label every trajectory against the manifest's experts and post-process.

    Output order is by trajectory id. Experts are kept (unlabeled unless
    ``cfg.include_experts``) so the manifest stays self-consistent.
    """
    by_id = {t.id: t for t in trajectories}
    experts = [by_id[e] for e in manifest.expert_ids]
    ordered = sorted(trajectories, key=lambda t: t.id)
    expert_set = set(manifest.expert_ids)
    targets = [t for t in ordered if cfg.include_experts or t.id not in expert_set]
    if not targets:
        raise ConfigError("nothing to label: dataset holds only expert trajectories")

    def work(t: Trajectory) -> Tuple[int, RewardSeries]:
        idx, raw = label_against_experts(t, experts, cfg)
        return idx, apply_squash(raw, t, cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, targets))
    else:
        results = [work(t) for t in targets]
    series = [r for _, r in results]
    chosen = {t.id: manifest.expert_ids[i] for t, (i, _) in zip(targets, results)}

    post: Dict[str, Any] = {"kind": cfg.postprocess}
    if cfg.postprocess == "offline":
        series, params = offline_rescale(series, cfg.reward_bias)
        post.update(asdict(params))
    elif cfg.postprocess == "online":
        state = online_scale(series[0], OnlineScaleState(None, cfg.auto_rew_scale_factor))
        series = [apply_online_scale(r, state) for r in series]
        post.update(scale=state.scale, auto_rew_scale_factor=state.auto_rew_scale_factor,
                    first_episode=targets[0].id)
    squash_info: Dict[str, Any] = {"kind": cfg.squash}
    if cfg.squash == "exp":
        sp = cfg.squash_params()
        squash_info.update(alpha=sp.alpha, beta=sp.beta)
    post["squash"] = squash_info

    labels = {t.id: r for t, r in zip(targets, series)}
    items = tuple((t, labels.get(t.id)) for t in ordered)
    labeling = {
        "method": cfg.method.value,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "version": __version__,
        "matched_expert": chosen,
    }
    out_manifest = replace(manifest, trajectory_count=len(items), labeling=labeling)
    return LabeledDataset(out_manifest, items, cfg.method, post)


def returns(series: Sequence[RewardSeries]) -> List[float]:
    return [r.total() for r in series]

