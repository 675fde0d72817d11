"""Brute-force reference solutions for toy instances.

The oracle enumerates every served user and every power vector on a
uniform per-subcarrier grid and keeps the feasible point with the best
bits-per-Joule ratio.  It maximizes the ratio directly, so it shares no
mechanism with the dual/fractional pipeline it is used to check.
``kkt_residual`` certifies a solver output against the optimality
conditions of the fixed-``q`` subproblem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import metrics
from .dual_solver import DualState
from .metrics import AllocationPolicy
from .system_model import ChannelRealization, SystemParams

__all__ = ["OracleSolution", "grid_points", "grid_oracle", "richardson_gap", "kkt_residual",
           "MAX_USERS", "MAX_SUBCARRIERS", "MIN_LEVELS"]

MAX_USERS = 3
MAX_SUBCARRIERS = 4
MIN_LEVELS = 50


@dataclass
class OracleSolution:
    """Best grid point.  ``energy_efficiency`` is ``metrics.energy_efficiency``
    of ``policy``; it is 0 with ``policy=None`` when no grid point is feasible."""

    energy_efficiency: float
    policy: AllocationPolicy | None
    levels: int
    step: float
    max_power: float
    evaluated: int
    grid_index: tuple | None = None

    @property
    def feasible(self) -> bool:
        return self.policy is not None


def grid_points(n: int, total: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``n`` with sum ``<= total``,
    in lexicographic order."""
    pts = np.zeros((1, 0), np.int16 if total < 2**15 else np.int64)
    used = np.zeros(1, np.int64)
    for _ in range(n):
        counts = total - used + 1
        starts = np.cumsum(counts) - counts
        nxt = np.arange(counts.sum()) - np.repeat(starts, counts)
        pts = np.column_stack([np.repeat(pts, counts, axis=0), nxt.astype(pts.dtype)])
        used = np.repeat(used, counts) + nxt
    return pts


def _lex_key(user: int, grid_index) -> tuple:
    return (user, tuple(int(g) for g in grid_index))


def grid_oracle(realization: ChannelRealization, params: SystemParams, levels: int = 200,
                tol: float = 1e-6, chunk: int = 1 << 20) -> OracleSolution:
    """Exhaustive search over ``{0, P_max/levels, ..., P_max}`` per subcarrier.

    Points are restricted to ``sum p <= min(P_max, (P_PG - P_C)/eps)`` and
    filtered by C1-C4 at relative tolerance ``tol``; the winner is
    re-checked with :func:`metrics.check_constraints`.  Ties on the ratio
    go to the lowest user index, then the lexicographically smallest grid
    vector, so the result does not depend on enumeration order.
    """
    K, n = params.num_users, realization.num_subcarriers
    if K > MAX_USERS or n > MAX_SUBCARRIERS:
        raise ValueError(f"grid oracle limited to K <= {MAX_USERS}, n_F <= {MAX_SUBCARRIERS} (got {K}, {n})")
    if levels < MIN_LEVELS:
        raise ValueError(f"levels must be >= {MIN_LEVELS}")
    step = params.max_tx_power / levels
    # largest admissible grid sum; the tiny slack keeps exact multiples of the step on the grid
    total = min(levels, int(math.floor(params.power_budget / step * (1 + 1e-12))))

    W = params.subcarrier_bandwidth
    g = np.arange(levels + 1) * step
    req = params.min_harvest
    rmin = params.min_rate
    e = realization.transfer_eff
    idle = realization.idle_transfer
    G_all = grid_points(n, total)
    found = []  # (ee, user, grid index) of each user's best point
    for k in range(K):
        rate_tab = W * np.log2(1.0 + g[None, :] * realization.cnr[:, k][:, None])  # (n, levels+1)
        others = [j for j in range(K) if j != k and req[j] > 0]
        best = None
        # slices of the outermost grid axis; any partition gives the same winner
        for lo in range(0, len(G_all), chunk):
            G = G_all[lo:lo + chunk]
            rate = rate_tab[0, G[:, 0]]
            for i in range(1, n):
                rate = rate + rate_tab[i, G[:, i]]
            ok = rate - rmin >= -tol * (rmin if rmin > 0 else 1.0)
            if others:
                harvest = (G @ e[:, others]) * step
                ok &= np.all(harvest - req[others] >= -tol * req[others], axis=1)
            if not ok.any():
                continue
            G, rate = G[ok], rate[ok]
            tp = params.circuit_power + (G @ (params.amplifier_inefficiency - idle[:, k])) * step
            ee = params.weights[k] * rate / tp
            top = ee.max()
            # rows are lexicographic, so the first maximizer is the smallest
            idx = int(np.flatnonzero(ee == top)[0])
            if best is None or top > best[0]:
                best = (float(top), k, G[idx].astype(np.int64))
        if best is not None:
            found.append(best)
    evaluated = K * len(G_all)

    if not found:
        return OracleSolution(0.0, None, levels, step, params.max_tx_power, evaluated)
    found.sort(key=lambda t: (-t[0], _lex_key(t[1], t[2])))
    for _, k, G in found:
        policy = AllocationPolicy.single_user(k, G * step, K)
        if metrics.check_constraints(policy, realization, params, tol=tol).feasible:
            ee = metrics.energy_efficiency(policy, realization, params)
            return OracleSolution(ee, policy, levels, step, params.max_tx_power, evaluated, _lex_key(k, G))
    return OracleSolution(0.0, None, levels, step, params.max_tx_power, evaluated)


def richardson_gap(fine: OracleSolution, coarse: OracleSolution) -> float:
    """Relative grid-gap estimate from two nested grids (``coarse`` has half
    the levels).  Assumes first-order convergence in the step, so the
    distance from the fine grid to the continuum optimum is about the
    fine-coarse difference."""
    return abs(fine.energy_efficiency - coarse.energy_efficiency) / max(fine.energy_efficiency, 1.0)


def kkt_residual(policy: AllocationPolicy, duals: DualState, q: float,
                 realization: ChannelRealization, params: SystemParams) -> float:
    """Optimality-condition violation of a single-user policy at fixed ``q``.

    Stationarity is measured per subcarrier of the served user as the gap
    between marginal weighted rate and marginal price, relative to the
    price.  Complementary slackness is ``|multiplier * slack|`` per
    constraint relative to the objective magnitude; negative multipliers
    make the residual infinite.  Returns the largest stationarity term plus the
    largest slackness term.
    """
    k = policy.selected_user
    if k is None:
        raise ValueError("policy does not serve exactly one user")
    K = params.num_users
    P = policy.power[:, k]
    gam = realization.cnr[:, k]
    e = realization.transfer_eff
    eps = params.amplifier_inefficiency
    alpha = np.asarray(duals.alpha, float)
    others = np.arange(K) != k

    price = (q * (eps - realization.idle_transfer[:, k]) + duals.lambda_ * eps + duals.beta
             - e[:, others] @ alpha[others])
    A = params.subcarrier_bandwidth * (params.weights[k] + duals.gamma) / math.log(2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        marginal = np.where(gam > 0, A * gam / (1.0 + P * gam), 0.0)
    if np.any(price <= 0):
        stat = math.inf if np.any((price <= 0) & (marginal > 0)) else 0.0
    else:
        gap = np.where(P > 0, np.abs(marginal - price), np.maximum(marginal - price, 0.0))
        stat = float(np.max(gap / price))

    radiated = float(P.sum())
    harvest = metrics.harvest_per_user(policy, realization)
    slack_c1 = harvest - np.where(others, params.min_harvest, 0.0)
    U = metrics.capacity(policy, realization, params)
    TP = metrics.total_power(policy, realization, params)
    terms = np.concatenate([
        alpha * slack_c1,
        [duals.beta * (params.max_tx_power - radiated),
         duals.lambda_ * (params.grid_power - params.circuit_power - eps * radiated),
         duals.gamma * (metrics.sum_rate(policy, realization, params) - params.min_rate),
         duals.delta * (1.0 - policy.selection.sum())],
    ])
    mults = np.concatenate([alpha, [duals.beta, duals.lambda_, duals.gamma, duals.delta]])
    if np.any(mults < 0):
        return math.inf
    scale = abs(U) + q * abs(TP) + 1.0
    return stat + float(np.max(np.abs(terms))) / scale
