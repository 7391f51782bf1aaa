"""Slow, independent reference implementations used only by the tests.

Nothing here imports numeric code from ``trajlabel``; everything is plain
Python loops over lists so that agreement with the vectorised package is
evidence rather than tautology.
"""
import itertools
import math
from fractions import Fraction


def dist(x, y, metric):
    if metric == "euclidean":
        return math.sqrt(math.fsum((a - b) ** 2 for a, b in zip(x, y)))
    nx = math.sqrt(math.fsum(a * a for a in x))
    ny = math.sqrt(math.fsum(b * b for b in y))
    if nx == 0 or ny == 0:
        return 1.0
    return min(2.0, max(0.0, 1.0 - math.fsum(a * b for a, b in zip(x, y)) / (nx * ny)))


def cost_matrix(xs, ys, metric):
    return [[dist(x, y, metric) for y in ys] for x in xs]


def context_entry(xs, ys, i, j, metric, k_c):
    """Average of k_c aligned costs, indices clamped to each sequence's last element (0-based)."""
    T, Te = len(xs), len(ys)
    return sum(dist(xs[min(i + h, T - 1)], ys[min(j + h, Te - 1)], metric) for h in range(k_c)) / k_c


def partition(T, Te):
    """Segments built by dealing expert indices out in order: the first Te % T
    segments take one extra index. Independent of the closed-form bounds."""
    if T > Te:
        segs = [[t] for t in range(1, Te + 1)] + [[] for _ in range(T - Te)]
    else:
        sizes = [Te // T + (1 if t < Te % T else 0) for t in range(T)]
        it = iter(range(1, Te + 1))
        segs = [[next(it) for _ in range(s)] for s in sizes]
    return segs


def min_dist(xs, ys, metric):
    return [-min(dist(x, y, metric) for y in ys) for x in xs]


def seg_match(xs, ys, metric):
    out = []
    for x, seg in zip(xs, partition(len(xs), len(ys))):
        cands = seg or [len(ys)]
        out.append(-min(dist(x, ys[j - 1], metric) for j in cands))
    return out


def seg_window(xs, ys, metric, k_w, k_c):
    T, Te = len(xs), len(ys)
    out = []
    for t in range(1, T + 1):
        js = [j for j in range(t - k_w, t + k_w + 1) if 1 <= j <= Te] or [Te]
        out.append(-min(context_entry(xs, ys, t - 1, j - 1, metric, k_c) for j in js))
    return out


def window(t, a, b, c, Te):
    centre = math.floor(Fraction(b) * t)
    js = [j for j in range(centre - a, centre + c + 1) if 1 <= j <= Te]
    return js or [Te]


def transport_by_permutation(C):
    """Optimal value of uniform square OT: by Birkhoff's theorem some permutation attains it."""
    n = len(C)
    return min(sum(C[i][p[i]] for i in range(n)) for p in itertools.permutations(range(n))) / n
