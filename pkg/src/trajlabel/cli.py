"""Command line entry point: ``trajlabel {label,eval,bench,inspect}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 solver error,
4 evaluation threshold failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import __version__
from .core import Method
from .dataset_io import dataset_stats, load_dataset, load_labeled, save_labeled
from .harness import (
    GROUND_TRUTH,
    RANDOM_REWARD,
    Gridworld,
    PointMassTask,
    QLearnerConfig,
    gen_pointmass_suite,
    gridworld_imitation,
    ranking_fidelity,
    timing_probe,
    write_curve_csv,
    write_timing_csv,
)
from .ot import SinkhornError
from .pipeline import ConfigError, LabelConfig, label_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER, EXIT_THRESHOLD = 0, 1, 2, 3, 4
WORKERS_ENV = "TRAJLABEL_WORKERS"
METHOD_NAMES = [m.value for m in Method]
BENCH_METHODS = ["ot", "temporal-ot", "min-dist", "min-dist-kdtree", "seg-match", "seg-window"]

# CLI flag -> LabelConfig field for the label subcommand.
LABEL_FLAGS = {
    "method": "method",
    "metric": "metric",
    "squash": "squash",
    "alpha": "alpha",
    "beta": "beta",
    "k_c": "k_c",
    "k_m": "k_m",
    "k_w": "k_w",
    "window_a": "window_a",
    "window_b": "window_b",
    "window_c": "window_c",
    "epsilon": "epsilon",
    "max_iterations": "max_iterations",
    "marginal_tolerance": "marginal_tolerance",
    "lenient_lengths": "lenient_lengths",
    "postprocess": "postprocess",
    "reward_bias": "reward_bias",
    "auto_rew_scale_factor": "auto_rew_scale_factor",
    "include_experts": "include_experts",
    "seed": "seed",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> List[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trajlabel", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"trajlabel {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    lab = sub.add_parser("label", help="label a trajectory dataset against its expert(s)")
    lab.add_argument("input")
    lab.add_argument("output")
    lab.add_argument("--config", help="JSON file of LabelConfig settings (flags override it)")
    lab.add_argument("--method", choices=METHOD_NAMES)
    lab.add_argument("--metric", choices=["cosine", "euclidean"])
    lab.add_argument("--squash", choices=["exp", "otr", "none"])
    lab.add_argument("--alpha", type=float)
    lab.add_argument("--beta", type=float)
    lab.add_argument("--k-c", dest="k_c", type=int)
    lab.add_argument("--k-m", dest="k_m", type=int)
    lab.add_argument("--k-w", dest="k_w", type=int)
    lab.add_argument("--window-a", dest="window_a", type=int)
    lab.add_argument("--window-b", dest="window_b", help="stride as a fraction, e.g. 3/2")
    lab.add_argument("--window-c", dest="window_c", type=int)
    lab.add_argument("--epsilon", type=float)
    lab.add_argument("--max-iterations", dest="max_iterations", type=int)
    lab.add_argument("--marginal-tolerance", dest="marginal_tolerance", type=float)
    lab.add_argument("--lenient-lengths", dest="lenient_lengths", action="store_const", const=True)
    lab.add_argument("--postprocess", choices=["none", "offline", "online"])
    lab.add_argument("--reward-bias", dest="reward_bias", type=float)
    lab.add_argument("--auto-rew-scale-factor", dest="auto_rew_scale_factor", type=float)
    lab.add_argument("--include-experts", dest="include_experts", action="store_const", const=True)
    lab.add_argument("--seed", type=int)
    lab.add_argument("--workers", type=int, help=f"labeling threads (default ${WORKERS_ENV} or 1)")

    ev = sub.add_parser("eval", help="run the desk-scale evaluation harness")
    ev.add_argument("--suite", choices=["pointmass", "gridworld"], required=True)
    ev.add_argument("--methods", "--method", dest="methods", type=_csv_list,
                    default=None, help="comma-separated method names")
    ev.add_argument("--seeds", type=int, default=20, help="point-mass suites to average over")
    ev.add_argument("--agents", type=int, default=10)
    ev.add_argument("--episodes", type=int, default=5000)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--metric", choices=["cosine", "euclidean"], default="euclidean")
    ev.add_argument("--min-spearman", type=float, default=0.9)
    ev.add_argument("--min-success", type=float, default=0.9)
    ev.add_argument("--out", default="eval_out", help="directory for CSV output")

    be = sub.add_parser("bench", help="time labeling methods against trajectory length")
    be.add_argument("--sizes", type=_int_list, required=True)
    be.add_argument("--methods", type=_csv_list, default=BENCH_METHODS)
    be.add_argument("--d", type=int, default=4)
    be.add_argument("--repeats", type=int, default=5)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--out", default="bench.csv")
    be.add_argument("--run-id", default=None)

    ins = sub.add_parser("inspect", help="print a dataset's manifest and statistics")
    ins.add_argument("path")
    return p


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def resolve_label_config(args, manifest_metric: Optional[str] = None) -> LabelConfig:
    """Flags override the config file, which overrides defaults. The metric falls
    back to the dataset manifest's before the library default."""
    explicit: Dict[str, Any] = {}
    if manifest_metric is not None:
        explicit["metric"] = manifest_metric
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}")
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        explicit.update(loaded)
    for flag, name in LABEL_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            explicit[name] = value
    try:
        return LabelConfig.from_explicit(explicit)
    except (ConfigError, ValueError, TypeError) as exc:
        raise UsageError(str(exc))


def _workers(args) -> int:
    if args.workers is not None:
        n = args.workers
    else:
        try:
            n = int(os.environ.get(WORKERS_ENV, "1"))
        except ValueError:
            raise UsageError(f"${WORKERS_ENV} must be an integer")
    if n < 1:
        raise UsageError("worker count must be >= 1")
    return n


def _label(input_path, output_path, cfg: LabelConfig, workers: int, loaded=None) -> int:
    manifest, trajs = loaded or load_dataset(input_path)
    labeled = label_dataset(manifest, trajs, cfg, workers=workers)
    save_labeled(labeled, output_path)
    n = sum(r is not None for _, r in labeled.trajectories)
    _log(f"labeled {n} trajectories -> {output_path}")
    return EXIT_OK


def cmd_label(input_path, output_path, cfg: LabelConfig, workers: int = 1) -> int:
    """Label ``input_path`` into ``output_path``; returns the process exit status."""
    return _guarded(_label, input_path, output_path, cfg, workers)


def _label_from_args(args) -> int:
    workers = _workers(args)
    loaded = load_dataset(args.input)
    cfg = resolve_label_config(args, loaded[0].distance_metric.value)
    _log("resolved config: " + json.dumps(cfg.to_dict(), sort_keys=True))
    return _label(args.input, args.output, cfg, workers, loaded)


def _eval_pointmass(args, methods, out: Path) -> List[str]:
    failures = []
    rows = []
    for m in methods:
        rhos = [
            ranking_fidelity(m, gen_pointmass_suite(PointMassTask(seed=args.seed + s), args.agents),
                             args.metric)
            for s in range(args.seeds)
        ]
        ok = min(rhos) >= args.min_spearman
        rows.append((m, sum(rhos) / len(rhos), min(rhos), len(rhos), args.min_spearman, ok))
        print(f"pointmass {m:<12} spearman mean={rows[-1][1]:.4f} min={min(rhos):.4f} "
              f"{'PASS' if ok else 'FAIL'}")
        if not ok:
            failures.append(f"{m}: min spearman {min(rhos):.4f} < {args.min_spearman}")
    with open(out / "eval_pointmass.csv", "w") as fh:
        fh.write("method,mean_spearman,min_spearman,suites,threshold,passed\n")
        for m, mean, lo, n, thr, ok in rows:
            fh.write(f"{m},{mean:.6f},{lo:.6f},{n},{thr},{int(ok)}\n")
    return failures


def _eval_gridworld(args, methods, out: Path) -> List[str]:
    env = Gridworld()
    expert = env.expert_demo()
    cfg = QLearnerConfig(episodes=args.episodes, seed=args.seed)
    failures = []
    rows = []
    for m in methods:
        res = gridworld_imitation(m, env, expert, cfg, metric=args.metric)
        write_curve_csv(res, out / f"curve_{m}.csv")
        control = m == RANDOM_REWARD
        ok = res.success_rate <= 0.2 if control else res.success_rate >= args.min_success
        rows.append((m, res.success_rate, ok))
        print(f"gridworld {m:<12} success={res.success_rate:.2f} {'PASS' if ok else 'FAIL'}")
        if not ok:
            failures.append(f"{m}: success rate {res.success_rate:.2f}")
    with open(out / "eval_gridworld.csv", "w") as fh:
        fh.write("method,success_rate,episodes,seed,passed\n")
        for m, rate, ok in rows:
            fh.write(f"{m},{rate:.4f},{args.episodes},{args.seed},{int(ok)}\n")
    return failures


def cmd_eval(args) -> int:
    default = ["min-dist", "seg-match"] if args.suite == "pointmass" else ["seg-match"]
    methods = args.methods or default
    allowed = set(METHOD_NAMES) - {"unified"}
    if args.suite == "gridworld":
        allowed |= {RANDOM_REWARD, GROUND_TRUTH}
    bad = [m for m in methods if m not in allowed]
    if bad:
        raise UsageError(f"unknown method(s) for suite {args.suite}: {', '.join(bad)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = _eval_pointmass if args.suite == "pointmass" else _eval_gridworld
    failures = run(args, methods, out)
    summary = "all thresholds passed" if not failures else "FAILED: " + "; ".join(failures)
    (out / f"summary_{args.suite}.txt").write_text(summary + "\n")
    print(summary)
    return EXIT_THRESHOLD if failures else EXIT_OK


def cmd_bench(args) -> int:
    bad = [m for m in args.methods if m not in BENCH_METHODS]
    if bad:
        raise UsageError(f"unknown bench method(s): {', '.join(bad)}")
    if not args.sizes or any(s < 1 for s in args.sizes):
        raise UsageError("sizes must be positive integers")
    run_id = args.run_id or time.strftime("run-%Y%m%dT%H%M%S") + f"-{os.getpid()}"
    rows = []
    for m in args.methods:
        for T, secs in timing_probe(m, args.sizes, d=args.d, repeats=args.repeats, seed=args.seed):
            rows.append((m, T, args.d, secs))
            print(f"{m:<16} T={T:<6} {secs:.6f}s")
    write_timing_csv(rows, args.out, run_id)
    _log(f"appended {len(rows)} rows to {args.out} (run id {run_id})")
    return EXIT_OK


def cmd_inspect(args) -> int:
    ds = load_labeled(args.path)
    print(json.dumps(ds.manifest.to_record(), indent=2, sort_keys=True))
    trajs = [t for t, _ in ds.trajectories]
    labeled = [(t, r) for t, r in ds.trajectories if r is not None]
    lengths = sorted(len(t) for t in trajs)
    print(f"trajectories: {len(trajs)}  lengths: min={lengths[0]} max={lengths[-1]}")
    if labeled:
        st = dataset_stats([t for t, _ in labeled], [r for _, r in labeled])
        print(f"labeled: {len(labeled)}  max_return={st.max_return:.6g}  "
              f"min_return={st.min_return:.6g}{'  (degenerate)' if st.degenerate else ''}")
        print(f"per-step reward: mean={st.reward_mean:.6g} min={st.reward_min:.6g} "
              f"max={st.reward_max:.6g}")
    return EXIT_OK


COMMANDS = {"label": _label_from_args, "eval": cmd_eval, "bench": cmd_bench, "inspect": cmd_inspect}


def _guarded(fn, *args) -> int:
    try:
        return fn(*args)
    except (UsageError, ConfigError) as exc:
        _log(f"trajlabel: usage error: {exc}")
        return EXIT_USAGE
    except SinkhornError as exc:
        _log(f"trajlabel: solver error: {exc}")
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        # DatasetError is a ValueError; so are shape/dimension complaints from labeling.
        _log(f"trajlabel: data error: {exc}")
        return EXIT_DATA


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return _guarded(COMMANDS[args.command], args)


if __name__ == "__main__":
    sys.exit(main())
