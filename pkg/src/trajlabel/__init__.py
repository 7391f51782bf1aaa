"""Reward labeling of trajectories against expert demonstrations.

OT-based rewards (entropic OT, temporally masked OT) and proximity rewards
(Min-Dist, Seg-match, Seg-window, general window form), with the usual
squash / rescale post-processing.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Method,
    Metric,
    RewardSeries,
    Stage,
    Trajectory,
    context_cost,
    distance,
    pairwise_cost,
)
from .ot import (  # noqa: E402
    Coupling,
    MaskMatrix,
    SinkhornConfig,
    SinkhornError,
    exact_ot_oracle,
    masked_sinkhorn,
    ot_reward,
    sinkhorn,
    temporal_ot_reward,
)
from .proximity import (  # noqa: E402
    SegmentPartition,
    WindowSpec,
    min_dist_reward,
    min_dist_reward_kdtree,
    seg_match_reward,
    seg_window_reward,
    segment_partition,
    unified_window_reward,
)
