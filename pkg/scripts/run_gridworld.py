"""Tabular Q-learning on the 8x8 gridworld, rewarded only by a labeler.

Writes one learning curve per method plus a summary line each.

    python3 scripts/run_gridworld.py --methods seg-match,min-dist,random,ground-truth
"""
import argparse
from pathlib import Path

from trajlabel.harness import Gridworld, QLearnerConfig, gridworld_imitation, write_curve_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--methods", default="seg-match,random,ground-truth")
    ap.add_argument("--episodes", type=int, default=5000)
    ap.add_argument("--size", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="gridworld_out")
    a = ap.parse_args()

    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    env = Gridworld(a.size, a.size, step_limit=a.size * a.size)
    cfg = QLearnerConfig(episodes=a.episodes, seed=a.seed)
    for m in a.methods.split(","):
        res = gridworld_imitation(m, env, env.expert_demo(), cfg)
        write_curve_csv(res, out / f"curve_{m}.csv")
        # fraction of the last 500 training episodes that reached the goal (exploration on)
        tail = res.curve[-500:]
        late = sum(ok for _, _, ok in tail) / len(tail)
        print(f"{m:<14} greedy success={res.success_rate:.2f}  late training reach={late:.2f}")


if __name__ == "__main__":
    main()
