"""Write a small point-mass dataset (one or two experts plus noisy agents) for trying the CLI.

    python3 scripts/make_demo_dataset.py demo.jsonl --agents 6 --experts 2
"""
import argparse

from trajlabel.core import Metric, Trajectory
from trajlabel.dataset_io import DatasetManifest, save_dataset
from trajlabel.harness import PointMassTask, gen_pointmass_suite


def build(n_agents: int, n_experts: int, horizon: int, seed: int):
    task = PointMassTask(horizon=horizon, seed=seed)
    suite = gen_pointmass_suite(task, n_agents)
    trajs = [Trajectory(suite.expert.states, id="expert-0")]
    if n_experts > 1:
        # second expert: the same path taken slightly above the straight line
        lifted = suite.expert.states.copy()
        lifted[:, 1] += 0.02
        trajs.append(Trajectory(lifted, id="expert-1"))
    trajs += [Trajectory(a.states, id=f"agent-{i:02d}") for i, a in enumerate(suite.agents)]
    manifest = DatasetManifest(
        name="pointmass-demo",
        state_dim=2,
        trajectory_count=len(trajs),
        expert_ids=tuple(t.id for t in trajs[:n_experts]),
        distance_metric=Metric.EUCLIDEAN,
        created_at="1970-01-01T00:00:00Z",
    )
    return manifest, trajs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--agents", type=int, default=6)
    ap.add_argument("--experts", type=int, choices=[1, 2], default=1)
    ap.add_argument("--horizon", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    manifest, trajs = build(a.agents, a.experts, a.horizon, a.seed)
    save_dataset(a.out, manifest, trajs)
    print(f"wrote {len(trajs)} trajectories to {a.out}")


if __name__ == "__main__":
    main()
