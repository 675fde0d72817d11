"""Energy-efficiency maximization by the Dinkelbach iteration.

``maximize_ee`` starts from ``q = 0`` and repeatedly solves the
parametric subproblem ``max U - q U_TP``; ``q`` is then replaced by the
ratio achieved by the new policy until ``U - q U_TP`` drops below
``epsilon * U``.  ``baseline_capacity_max`` stops after the first
subproblem, which maximizes the weighted capacity alone.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .dual_solver import DualState, InfeasibleError, InnerSolution, SolverOptions, check_feasibility, solve_inner
from .metrics import AllocationPolicy, ConstraintReport
from .system_model import ChannelRealization, SystemParams

__all__ = ["SolveReport", "f_value", "maximize_ee", "baseline_capacity_max"]

log = logging.getLogger(__name__)


@dataclass
class SolveReport:
    """Outcome for one channel realization.

    Infeasible realizations follow the failure convention: energy
    efficiency, capacity and harvested power are reported as zero and
    ``feasible`` is False.
    """

    q: float
    policy: AllocationPolicy | None
    capacity: float
    total_power: float
    harvested_power: float
    converged: bool
    feasible: bool
    outer_iterations: int
    total_iterations: int
    trace: list = field(default_factory=list)
    constraints: ConstraintReport | None = None
    scheme: str = "proposed"
    status: str = "ok"
    duals: DualState | None = None  # multipliers of the subproblem that produced ``policy``
    inner_q: float = 0.0  # the q that subproblem was solved at

    @property
    def energy_efficiency(self) -> float:
        return self.q

    @property
    def f_final(self) -> float:
        return self.trace[-1]["F"] if self.trace else 0.0

    @property
    def selected_user(self):
        return None if self.policy is None else self.policy.selected_user

    def to_record(self) -> dict:
        return {
            "scheme": self.scheme,
            "status": self.status,
            "feasible": self.feasible,
            "converged": self.converged,
            "energy_efficiency": self.q,
            "capacity": self.capacity,
            "total_power": self.total_power,
            "harvested_power": self.harvested_power,
            "radiated_power": 0.0 if self.policy is None else metrics.radiated_power(self.policy),
            "selected_user": -1 if self.selected_user is None else self.selected_user,
            "outer_iterations": self.outer_iterations,
            "total_iterations": self.total_iterations,
        }

    def write_trace(self, path) -> None:
        path = Path(path)
        cols = ["outer", "q", "U", "U_TP", "F", "inner_iterations", "selected_user"]
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for row in self.trace:
                w.writerow({c: row.get(c) for c in cols})


def f_value(q: float, inner: InnerSolution, realization: ChannelRealization, params: SystemParams) -> float:
    """``U - q * U_TP`` of the policy returned by the subproblem."""
    return (metrics.capacity(inner.policy, realization, params)
            - q * metrics.total_power(inner.policy, realization, params))


def _failure(scheme: str, status: str, iterations: int = 0, trace=None) -> SolveReport:
    return SolveReport(0.0, None, 0.0, 0.0, 0.0, False, False, 0, iterations, trace or [], None, scheme, status)


def _report(inner, inner_q, realization, params, opts, scheme, converged, outer, used, trace) -> SolveReport:
    policy = inner.policy
    U = metrics.capacity(policy, realization, params)
    TP = metrics.total_power(policy, realization, params)
    cons = metrics.check_constraints(policy, realization, params, tol=opts.feasibility_tol)
    return SolveReport(U / TP, policy, U, TP, metrics.harvested_power(policy, realization), converged,
                       True, outer, used, trace, cons, scheme, "ok" if converged else "unconverged",
                       inner.duals, inner_q)


def maximize_ee(realization: ChannelRealization, params: SystemParams, opts: SolverOptions | None = None,
                iteration_budget: int | None = None, feasibility=None) -> SolveReport:
    """Run the Dinkelbach loop on one realization.

    ``iteration_budget`` caps the total number of Layer-1/Layer-2 passes
    summed over all outer iterations.  When it runs out the last policy
    found is returned, flagged unconverged.
    """
    opts = opts or SolverOptions()
    fr = feasibility or check_feasibility(realization, params, opts)
    if not fr.feasible:
        return _failure("proposed", "infeasible")
    users = fr.feasible_users()

    q = 0.0
    warm = None
    best = None  # (inner solution, q it was solved at)
    trace = []
    used = 0
    converged = False
    outer = 0
    while outer < opts.max_outer_iters:
        remaining = None if iteration_budget is None else iteration_budget - used
        if remaining is not None and remaining <= 0:
            break
        cap = opts.max_dual_iters if remaining is None else min(opts.max_dual_iters, remaining)
        try:
            sol = solve_inner(q, realization, params, opts, candidates=users, warm=warm, max_iters=cap)
        except InfeasibleError:
            # only reachable when the budget truncates the very first subproblem
            used += cap
            break
        outer += 1
        used += max(sol.iterations, 1)
        warm = sol.warm
        U = metrics.capacity(sol.policy, realization, params)
        TP = metrics.total_power(sol.policy, realization, params)
        F = U - q * TP
        trace.append(dict(outer=outer, q=q, U=U, U_TP=TP, F=F, inner_iterations=sol.iterations,
                          selected_user=sol.policy.selected_user, inner_converged=sol.converged))
        if best is not None and F < 0:
            # an inexact subproblem did worse than the incumbent, which has F = 0 at this q
            log.debug("subproblem at q=%g returned F=%g < 0; keeping incumbent", q, F)
            converged = abs(F) < opts.dinkelbach_epsilon * U
            break
        best = (sol, q)
        if F < opts.dinkelbach_epsilon * U:
            converged = True
            break
        q = U / TP
    if best is None:
        return _failure("proposed", "budget", used, trace)
    return _report(best[0], best[1], realization, params, opts, "proposed", converged, outer, used, trace)


def baseline_capacity_max(realization: ChannelRealization, params: SystemParams,
                          opts: SolverOptions | None = None, iteration_budget: int | None = None,
                          feasibility=None) -> SolveReport:
    """Maximize weighted capacity under C1-C7 (a single subproblem at ``q = 0``)."""
    opts = opts or SolverOptions()
    fr = feasibility or check_feasibility(realization, params, opts)
    if not fr.feasible:
        return _failure("baseline", "infeasible")
    cap = opts.max_dual_iters if iteration_budget is None else min(opts.max_dual_iters, iteration_budget)
    try:
        sol = solve_inner(0.0, realization, params, opts, candidates=fr.feasible_users(), max_iters=cap)
    except InfeasibleError:
        return _failure("baseline", "budget", cap)
    U = metrics.capacity(sol.policy, realization, params)
    TP = metrics.total_power(sol.policy, realization, params)
    trace = [dict(outer=1, q=0.0, U=U, U_TP=TP, F=U, inner_iterations=sol.iterations,
                  selected_user=sol.policy.selected_user, inner_converged=sol.converged)]
    return _report(sol, 0.0, realization, params, opts, "baseline", sol.converged, 1,
                   max(sol.iterations, 1), trace)
