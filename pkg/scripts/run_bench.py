"""Timing sweep: every labeler over doubling trajectory lengths.

Appends to a CSV (one run id per invocation) and prints doubling ratios.

    python3 scripts/run_bench.py --sizes 100,200,400,800 --out bench.csv
"""
import argparse
import time

from trajlabel.harness import timing_probe, write_timing_csv

METHODS = ["min-dist", "min-dist-kdtree", "seg-match", "seg-window", "ot", "temporal-ot"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="100,200,400")
    ap.add_argument("--methods", default=",".join(METHODS))
    ap.add_argument("--d", type=int, default=4)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--out", default="bench.csv")
    a = ap.parse_args()

    sizes = [int(s) for s in a.sizes.split(",")]
    run_id = time.strftime("sweep-%Y%m%dT%H%M%S")
    rows = []
    for m in a.methods.split(","):
        res = timing_probe(m, sizes, d=a.d, repeats=a.repeats)
        rows += [(m, T, a.d, secs) for T, secs in res]
        ratios = " ".join(f"{b[1] / r[1]:.2f}" for r, b in zip(res, res[1:]))
        print(f"{m:<16} " + " ".join(f"{secs:.2e}" for _, secs in res) + f"   doubling ratios: {ratios}")
    write_timing_csv(rows, a.out, run_id)


if __name__ == "__main__":
    main()
