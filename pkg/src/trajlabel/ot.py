"""Entropic optimal transport and the OT-based trajectory rewards.

Sinkhorn iterations run on dual potentials in the log domain so that small
regularisation strengths do not underflow the Gibbs kernel. Temporal masks
are imposed by giving out-of-band pairs a kernel weight of exactly zero
(log-kernel ``-inf``), which pins those coupling entries to 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from .core import (
    Method,
    Metric,
    RewardSeries,
    Stage,
    Trajectory,
    context_cost,
    pairwise_cost,
)

ORACLE_MAX_CELLS = 64
# Largest expert length for which the dense Newton system is formed.
NEWTON_MAX_DIM = 2000


class SinkhornError(RuntimeError):
    """Raised when the Sinkhorn solver fails to reach the marginal tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SinkhornConfig:
    """Solver controls.

    ``anneal`` warm-starts the dual potentials along a halving schedule of
    regularisation strengths ending at ``epsilon``; ``overrelaxation`` is the
    relaxation factor used in the final stage (1 is plain Sinkhorn, values
    in (1, 2) accelerate the slow near-degenerate cases). If the final stage
    has not converged after ``newton_after`` sweeps, the remaining iterations
    are damped Newton steps on the column potentials (skipped above
    ``NEWTON_MAX_DIM`` expert steps; ``None`` disables them). Every sweep or
    Newton step counts against ``max_iterations``.
    """

    epsilon: float = 0.01
    max_iterations: int = 1000
    marginal_tolerance: float = 1e-6
    anneal: bool = True
    overrelaxation: float = 1.9
    newton_after: Optional[int] = 20

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be a positive integer, got {self.max_iterations}")
        if not self.marginal_tolerance > 0:
            raise ValueError(f"marginal_tolerance must be > 0, got {self.marginal_tolerance}")
        if self.newton_after is not None and (
            int(self.newton_after) != self.newton_after or self.newton_after < 0
        ):
            raise ValueError(f"newton_after must be None or >= 0, got {self.newton_after}")
        if not 1.0 <= self.overrelaxation < 2.0:
            raise ValueError(f"overrelaxation must lie in [1, 2), got {self.overrelaxation}")


@dataclass(frozen=True, eq=False)
class Coupling:
    """Transport plan between agent steps (rows) and expert steps (columns)."""

    entries: np.ndarray
    epsilon: float
    iterations_used: int

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    def marginal_residual(self) -> float:
        """Largest deviation of any row/column sum from its uniform target."""
        T, Te = self.entries.shape
        rows = np.abs(self.entries.sum(axis=1) - 1.0 / T).max()
        cols = np.abs(self.entries.sum(axis=0) - 1.0 / Te).max()
        return float(max(rows, cols))

    def objective(self, C: np.ndarray) -> float:
        return float(np.sum(np.asarray(C) * self.entries))


@dataclass(frozen=True, eq=False)
class MaskMatrix:
    """Binary band mask; ``entries[i, j]`` is True when pair (i, j) may carry mass."""

    entries: np.ndarray
    k_m: int

    @classmethod
    def band(cls, T: int, k_m: int, T_e: Optional[int] = None) -> "MaskMatrix":
        """Band of half-width ``k_m`` around the diagonal.

        With ``T_e`` different from ``T`` the band follows the stretched
        centre ``round(i * T_e / T)`` (1-based, halves rounded up).
        """
        if int(k_m) != k_m or k_m < 0:
            raise ValueError(f"mask width k_m must be a nonnegative integer, got {k_m}")
        if T < 1:
            raise ValueError("mask needs T >= 1")
        Te = T if T_e is None else T_e
        i = np.arange(1, T + 1)
        if Te == T:
            centre = i
        else:
            centre = np.array([int(Fraction(int(t) * Te, T) + Fraction(1, 2)) for t in i])
        j = np.arange(1, Te + 1)
        entries = np.abs(j[None, :] - centre[:, None]) <= k_m
        return cls(entries, int(k_m))

    def check_feasible(self) -> None:
        if not np.all(self.entries.any(axis=1)):
            raise ValueError("infeasible mask: some row has no admissible entry")
        if not np.all(self.entries.any(axis=0)):
            raise ValueError("infeasible mask: some column has no admissible entry")


def _row_lse(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1)
    return m + np.log(np.exp(z - m[:, None]).sum(axis=1))


def _col_lse(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=0)
    return m + np.log(np.exp(z - m[None, :]).sum(axis=0))


def _check_cost(C) -> np.ndarray:
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] < 1 or C.shape[1] < 1:
        raise ValueError(f"cost matrix must be a non-empty 2-D array, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    if np.any(C < 0):
        raise ValueError("cost matrix has negative entries")
    return C


def _phi(u: np.ndarray) -> np.ndarray:
    return np.expm1(u) - u


def _relax(old: np.ndarray, exact: np.ndarray, omega: float, eps: float) -> np.ndarray:
    """Over-relaxed potential update that never lowers the dual objective.

    With the other block fixed, the dual is separable per coordinate and,
    measured from its maximiser ``exact``, equals ``-eps * w * phi(u)`` with
    ``u = (x - exact) / eps``. The relaxed point ``(1 - omega) * u`` is kept
    only where it does not increase ``phi``; elsewhere the plain update is used.
    """
    u = (old - exact) / eps
    ok = _phi((1.0 - omega) * u) <= _phi(u)
    return np.where(ok, exact + (1.0 - omega) * (old - exact), exact)


def _schedule(C: np.ndarray, cfg: SinkhornConfig) -> list:
    eps = cfg.epsilon
    if not cfg.anneal:
        return [eps]
    finite = C[np.isfinite(C)]
    top = float(finite.max()) if finite.size else 0.0
    stages = []
    e = top
    while e > 2.0 * eps:
        stages.append(e)
        e *= 0.5
    stages.append(eps)
    return stages


def _semi_dual(neg_cost: np.ndarray, G: np.ndarray, eps: float, log_a: float, b: np.ndarray):
    """Dual value with the row potentials eliminated, plus the pieces needed downstream."""
    z = neg_cost + G[None, :] / eps
    lse = _row_lse(z)
    F = eps * (log_a - lse)
    value = F.mean() + float(b @ G)
    return value, z, lse, F


def _newton_direction(P: np.ndarray, grad: np.ndarray, eps: float) -> Optional[np.ndarray]:
    """Solve ``(diag(colsum P) - P^T diag(1/rowsum P) P) d = eps * grad``.

    The matrix is singular along the constant vector (potentials are defined
    up to a shift); adding a multiple of ``1 1^T`` removes that direction
    without changing the solution since ``grad`` sums to zero.
    """
    T = P.shape[0]
    col = P.sum(axis=0)
    H = np.diag(col) - (P.T * T) @ P
    H += col.mean()
    try:
        d = np.linalg.solve(H, eps * grad)
    except np.linalg.LinAlgError:
        return None
    return d if np.all(np.isfinite(d)) else None


def _log_sinkhorn(C: np.ndarray, cfg: SinkhornConfig) -> Coupling:
    """Log-domain Sinkhorn on cost ``C``; ``+inf`` entries are forbidden pairs.

    Potentials ``F`` (rows) and ``G`` (columns) are kept in cost units so that
    they carry over between annealing stages.
    """
    T, Te = C.shape
    log_a = -np.log(T)
    b = np.full(Te, 1.0 / Te)
    log_b = np.log(b)
    F = np.zeros(T)
    G = np.zeros(Te)
    stages = _schedule(C, cfg)
    # Intermediate stages only need to land near their own fixed point.
    stage_tol = max(cfg.marginal_tolerance, 1e-3 / Te)
    stage_cap = 50
    use_newton = cfg.newton_after is not None and Te <= NEWTON_MAX_DIM
    used = 0
    residual = np.inf
    with np.errstate(invalid="ignore", over="ignore"):
        for k, eps in enumerate(stages):
            final = k == len(stages) - 1
            omega = cfg.overrelaxation if final else 1.0
            tol = cfg.marginal_tolerance if final else stage_tol
            neg_cost = -C / eps
            it = 0
            next_newton = cfg.newton_after
            while used < cfg.max_iterations and (final or it < stage_cap):
                used += 1
                it += 1
                if final and use_newton and it > next_newton:
                    G, z, lse, moved = _newton_step(neg_cost, G, eps, log_a, b, residual)
                    F = eps * (log_a - lse)
                    if not moved:
                        # back off to plain sweeps for a while before trying again
                        next_newton = it + cfg.newton_after
                else:
                    G_new = eps * (log_b - _col_lse(neg_cost + F[:, None] / eps))
                    G = G_new if omega == 1.0 else _relax(G, G_new, omega, eps)
                    z = neg_cost + G[None, :] / eps
                    lse = _row_lse(z)
                    F_new = eps * (log_a - lse)
                    if not (np.all(np.isfinite(F_new)) and np.all(np.isfinite(G))):
                        raise SinkhornError(
                            f"non-finite potentials at iteration {used}; try a larger epsilon",
                            residual,
                            used,
                        )
                    F = F_new if omega == 1.0 else _relax(F, F_new, omega, eps)
                # Rows of P are normalised exactly; only columns can be off.
                P = np.exp(z - lse[:, None]) / T
                residual = float(np.abs(P.sum(axis=0) - b).max())
                if residual <= tol:
                    if final:
                        return Coupling(P, cfg.epsilon, used)
                    break
            if used >= cfg.max_iterations:
                break
    raise SinkhornError(
        f"Sinkhorn did not converge in {cfg.max_iterations} iterations "
        f"(column residual {residual:.3e} > {cfg.marginal_tolerance:.1e})",
        residual,
        used,
    )


def _newton_step(neg_cost, G, eps, log_a, b, residual):
    """One damped Newton ascent step on the semi-dual in ``G``.

    Returns the new ``G``, its row log-kernel ``z`` and row log-sum-exp, and
    whether a step was taken. A step is accepted on sufficient
    ascent (Armijo) or, once the value stalls at rounding level, on a smaller
    column residual.
    """
    value, z, lse, _ = _semi_dual(neg_cost, G, eps, log_a, b)
    T = z.shape[0]
    P = np.exp(z - lse[:, None]) / T
    grad = b - P.sum(axis=0)
    d = _newton_direction(P, grad, eps)
    if d is not None:
        slope = float(grad @ d)
        t = 1.0
        for _ in range(30):
            G_try = G + t * d
            v_try, z_try, lse_try, _ = _semi_dual(neg_cost, G_try, eps, log_a, b)
            if np.all(np.isfinite(lse_try)):
                P_try = np.exp(z_try - lse_try[:, None]) / T
                r_try = float(np.abs(P_try.sum(axis=0) - b).max())
                if v_try >= value + 1e-4 * t * slope or r_try < residual:
                    return G_try, z_try, lse_try, True
            t *= 0.5
    return G, z, lse, False


def sinkhorn(C, cfg: Optional[SinkhornConfig] = None) -> Coupling:
    """Entropic OT plan between uniform marginals ``1/T`` (rows) and ``1/T_e`` (columns)."""
    cfg = cfg or SinkhornConfig()
    C = _check_cost(C)
    return _log_sinkhorn(C, cfg)


def masked_sinkhorn(C, mask: MaskMatrix, cfg: Optional[SinkhornConfig] = None) -> Coupling:
    """Entropic OT restricted to the support of ``mask``.

    The returned plan is the effective (masked) coupling: entries outside the
    band are exactly zero and its marginals are uniform.
    """
    cfg = cfg or SinkhornConfig()
    C = _check_cost(C)
    M = np.asarray(mask.entries, dtype=bool)
    if M.shape != C.shape:
        raise ValueError(f"mask shape {M.shape} does not match cost shape {C.shape}")
    mask.check_feasible()
    return _log_sinkhorn(np.where(M, C, np.inf), cfg)


def exact_ot_oracle(C) -> Tuple[Coupling, float]:
    """Exact (unregularised) uniform-marginal OT on a small instance via a dense LP.

    Intended as a test oracle; refuses instances with more than 64 cells.
    """
    C = _check_cost(C)
    T, Te = C.shape
    if T * Te > ORACLE_MAX_CELLS:
        raise ValueError(f"exact oracle limited to {ORACLE_MAX_CELLS} cells, got {T}x{Te}")
    A = np.zeros((T + Te, T * Te))
    for i in range(T):
        A[i, i * Te:(i + 1) * Te] = 1.0
    for j in range(Te):
        A[T + j, j::Te] = 1.0
    rhs = np.concatenate([np.full(T, 1.0 / T), np.full(Te, 1.0 / Te)])
    res = linprog(C.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    P = np.clip(res.x.reshape(T, Te), 0.0, None)
    return Coupling(P, 0.0, int(res.nit)), float(np.sum(C * P))


def rewards_from_plan(C: np.ndarray, plan: Coupling) -> np.ndarray:
    """Per-row transport cost, negated: ``r_i = -sum_j C[i, j] * P[i, j]``."""
    return -np.sum(np.asarray(C) * plan.entries, axis=1)


def ot_reward(
    tau: Trajectory,
    tau_e: Trajectory,
    metric: Metric | str = Metric.COSINE,
    cfg: Optional[SinkhornConfig] = None,
) -> RewardSeries:
    C = pairwise_cost(tau, tau_e, metric)
    plan = sinkhorn(C, cfg)
    return RewardSeries(rewards_from_plan(C, plan), Stage.RAW, Method.OT)


def temporal_ot_reward(
    tau: Trajectory,
    tau_e: Trajectory,
    metric: Metric | str = Metric.COSINE,
    k_c: int = 3,
    k_m: int = 10,
    cfg: Optional[SinkhornConfig] = None,
    strict: bool = True,
) -> RewardSeries:
    """Context-aware cost plus band-masked OT.

    The masked problem is square; with ``strict=False`` unequal lengths are
    accepted and the band is stretched along ``round(i * T_e / T)``.
    """
    T, Te = len(tau), len(tau_e)
    if strict and T != Te:
        raise ValueError(
            f"temporal OT needs equal lengths in strict mode (T={T}, T_e={Te}); "
            "pass strict=False to stretch the mask"
        )
    C = context_cost(tau, tau_e, metric, k_c)
    mask = MaskMatrix.band(T, k_m, Te)
    plan = masked_sinkhorn(C, mask, cfg)
    return RewardSeries(rewards_from_plan(C, plan), Stage.RAW, Method.TEMPORAL_OT)
