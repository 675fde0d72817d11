"""Fixed-``q`` subproblem: maximize ``U - q * U_TP`` subject to C1-C7.

The problem is solved through its Lagrange dual.  Layer 1 computes the
multilevel water-filling power allocation and the marginal benefit of
serving each user in closed form; Layer 2 moves the multipliers along the
constraint slacks (the dual gradient) and projects them onto the
nonnegative orthant.

Selection is handled by running the two layers once per candidate user
(the candidates are processed together as one batch) and serving the
candidate with the largest dual value, i.e. the largest
``Q_k + alpha_k P_min_k`` once the price terms are included.  Only one
user is ever served, so C5/C6 hold by construction.

Multipliers are kept internally in *scaled* form: each one is multiplied
by the right-hand side of its constraint (``P_min_j``, power budget,
``R_min``) so that the dual gradient becomes the relative slack.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

from .metrics import AllocationPolicy
from .system_model import ChannelRealization, SystemParams

__all__ = [
    "DualState",
    "SolverOptions",
    "InnerSolution",
    "FeasibilityReport",
    "InfeasibleError",
    "theta",
    "theta_matrix",
    "optimal_power",
    "marginal_benefit",
    "select_user",
    "step_sizes",
    "update_duals",
    "solve_inner",
    "check_feasibility",
]

log = logging.getLogger(__name__)

LN2 = math.log(2.0)


class InfeasibleError(RuntimeError):
    """No user can be served while meeting C1-C4."""


@dataclass
class DualState:
    """Lagrange multipliers of C1 (``alpha``, per user), C2, C4, C3 and C5."""

    alpha: np.ndarray
    beta: float = 0.0
    gamma: float = 0.0
    lambda_: float = 0.0
    delta: float = 0.0
    m: int = 0

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)

    @classmethod
    def initial(cls, num_users: int, gamma: float = 0.0) -> "DualState":
        return cls(np.zeros(num_users), gamma=gamma)

    def power_price(self, params: SystemParams) -> float:
        """Price per radiated Watt from C2 and C3, ``beta + lambda * eps``."""
        return self.beta + self.lambda_ * params.amplifier_inefficiency

    def as_record(self) -> dict:
        rec = {f"alpha{k}": float(a) for k, a in enumerate(self.alpha)}
        rec.update(beta=self.beta, gamma=self.gamma, lambda_=self.lambda_, delta=self.delta, m=self.m)
        return rec


@dataclass
class SolverOptions:
    """Knobs for the inner dual iteration and the outer fractional loop.

    ``step_rule="newton"`` scales the dual gradient by the inverse dual
    Hessian (exact second derivatives of the water-filling value
    function); ``"diminishing"`` uses ``a_u / (1 + m) ** step_exponent``
    per multiplier.
    """

    max_dual_iters: int = 2000
    dual_tolerance: float = 1e-9
    movement_tolerance: float = 1e-5
    step_rule: str = "newton"
    step_scales: tuple = (0.5, 0.5, 0.5, 0.5, 0.5)  # C1, C2, C4, C3, C5
    step_exponent: float = 0.6
    dinkelbach_epsilon: float = 1e-6
    max_outer_iters: int = 10
    feasibility_tol: float = 1e-6
    initial_gamma: float = 0.0

    def __post_init__(self):
        if self.step_rule not in ("newton", "diminishing"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if not 0.5 < self.step_exponent <= 1.0:
            # sum xi = inf needs exponent <= 1; xi -> 0 needs > 0; (0.5, 1] also keeps sum xi^2 finite
            raise ValueError("step_exponent must lie in (0.5, 1]")
        if self.max_dual_iters < 1 or self.max_outer_iters < 1:
            raise ValueError("iteration limits must be positive")
        if min(self.step_scales) <= 0 or self.dual_tolerance <= 0 or self.dinkelbach_epsilon <= 0:
            raise ValueError("tolerances and step scales must be positive")


@dataclass
class InnerSolution:
    policy: AllocationPolicy
    duals: DualState
    marginal_benefit: np.ndarray
    objective: float
    converged: bool
    iterations: int
    feasible: bool = True
    candidate_objective: np.ndarray = field(default_factory=lambda: np.zeros(0))
    candidate_feasible: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    trace: list = field(default_factory=list)


# --------------------------------------------------------------------------
# Layer 1, single dual state (all users share the multipliers)

def theta_matrix(q: float, duals: DualState, realization: ChannelRealization, params: SystemParams) -> np.ndarray:
    """Marginal cost of radiated power, ``Theta[i, k]``, for every subcarrier and user."""
    eps = params.amplifier_inefficiency
    e = realization.transfer_eff
    idle = realization.idle_transfer
    weighted = e @ duals.alpha  # sum_j alpha_j e_ij
    idle_alpha = weighted[:, None] - e * duals.alpha[None, :]
    return q * (eps - idle) + duals.lambda_ * eps + duals.beta - idle_alpha


def theta(q: float, duals: DualState, realization: ChannelRealization, params: SystemParams, i: int, k: int) -> float:
    """``Theta_ik = q (eps - sum_{j!=k} e_ij) + lambda eps + beta - sum_{j!=k} alpha_j e_ij``."""
    e = realization.transfer_eff[i]
    others = np.arange(e.size) != k
    eps = params.amplifier_inefficiency
    return float(q * (eps - e[others].sum()) + duals.lambda_ * eps + duals.beta - np.dot(duals.alpha[others], e[others]))


def _water_level(duals: DualState, params: SystemParams, th: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return params.subcarrier_bandwidth * (params.weights + duals.gamma) / (LN2 * th)


def optimal_power(q: float, duals: DualState, realization: ChannelRealization, params: SystemParams) -> np.ndarray:
    """Multilevel water-filling ``[W (w_k + gamma) / (ln2 Theta_ik) - 1/Gamma_ik]^+``.

    Where ``Theta_ik <= 0`` the water level is unbounded; those entries are
    capped at the power budget and a warning is logged.  The dual update
    then raises the power prices.
    """
    th = theta_matrix(q, duals, realization, params)
    cnr = realization.cnr
    bad = th <= 0
    safe = np.where(bad, 1.0, th)
    with np.errstate(divide="ignore"):
        inv_cnr = np.where(cnr > 0, 1.0 / np.where(cnr > 0, cnr, 1.0), np.inf)
    P = np.maximum(_water_level(duals, params, safe) - inv_cnr, 0.0)
    if np.any(bad):
        log.warning("non-positive power cost on %d entries; capping at the power budget", int(bad.sum()))
        P = np.where(bad & (cnr > 0), params.power_budget, P)
    return P


def _benefit_terms(x: np.ndarray) -> np.ndarray:
    """``log2(1 + x) - (x / ln2) / (1 + x)``, nonnegative for x >= 0."""
    return np.log1p(x) / LN2 - x / (LN2 * (1.0 + x))


def marginal_benefit(P: np.ndarray, realization: ChannelRealization, duals: DualState, params: SystemParams) -> np.ndarray:
    """``Q_k``: derivative of the Lagrangian w.r.t. the time-sharing factor ``s_k``."""
    x = np.maximum(P, 0.0) * realization.cnr
    return params.subcarrier_bandwidth * (params.weights + duals.gamma) * _benefit_terms(x).sum(axis=0)


def select_user(Q, duals: DualState | None = None, params: SystemParams | None = None) -> np.ndarray:
    """One-hot selection of ``argmax_k Q_k + alpha_k P_min_k`` (lowest index on ties).

    The C5 price ``delta`` shifts every user equally, so it never changes
    the choice.
    """
    score = np.asarray(Q, dtype=float).copy()
    if duals is not None and params is not None:
        score = score + duals.alpha * params.min_harvest
    s = np.zeros(score.size)
    s[int(np.argmax(score))] = 1.0
    return s


# --------------------------------------------------------------------------
# Layer 2

def step_sizes(m: int, opts: SolverOptions) -> np.ndarray:
    """``xi_u(m) = a_u / (1 + m) ** p``: positive, vanishing, non-summable."""
    return np.asarray(opts.step_scales, dtype=float) / (1.0 + m) ** opts.step_exponent


def constraint_slacks(policy: AllocationPolicy, realization: ChannelRealization, params: SystemParams) -> dict:
    """Brackets of the multiplier updates (positive = constraint has room)."""
    Ps = policy.effective_power
    s = policy.selection
    radiated = Ps.sum()
    rate = (params.subcarrier_bandwidth * np.log2(1.0 + policy.power * realization.cnr)).sum(axis=0) @ s
    return {
        "alpha": Ps.sum(axis=1) @ realization.transfer_eff - (1.0 - s) * params.min_harvest,
        "beta": params.max_tx_power - radiated,
        "gamma": rate - params.min_rate,
        "lambda_": params.grid_power - params.circuit_power - params.amplifier_inefficiency * radiated,
        "delta": 1.0 - s.sum(),
    }


def update_duals(duals: DualState, policy: AllocationPolicy, realization: ChannelRealization,
                 params: SystemParams, opts: SolverOptions) -> DualState:
    """One projected gradient step on every multiplier.

    Each multiplier moves against its constraint slack scaled by the step
    ``xi_u(m)`` and by the constraint's own scale, then is clipped at 0.
    """
    xi = step_sizes(duals.m, opts)
    sl = constraint_slacks(policy, realization, params)
    objective_scale = params.subcarrier_bandwidth * params.num_subcarriers * max(params.weights.max(), 1e-12) / LN2
    # multiplier units are objective per constraint unit
    c1_scale = np.where(params.min_harvest > 0, params.min_harvest, 1.0)
    rate_scale = params.min_rate if params.min_rate > 0 else 1.0
    alpha = np.maximum(duals.alpha - xi[0] * objective_scale / c1_scale ** 2 * sl["alpha"], 0.0)
    beta = max(duals.beta - xi[1] * objective_scale / params.max_tx_power ** 2 * sl["beta"], 0.0)
    gamma = max(duals.gamma - xi[2] * objective_scale / rate_scale ** 2 * sl["gamma"], 0.0)
    grid_scale = params.grid_power - params.circuit_power
    lam = max(duals.lambda_ - xi[3] * objective_scale / grid_scale ** 2 * sl["lambda_"], 0.0)
    delta = max(duals.delta - xi[4] * objective_scale * sl["delta"], 0.0)
    return DualState(alpha, beta, gamma, lam, delta, duals.m + 1)


# --------------------------------------------------------------------------
# batched per-candidate solver

class _Candidates:
    """Dual function of the single-user subproblems, one row per candidate.

    Variables per row: ``[alpha_0 .. alpha_{K-1}, nu, gamma]`` in scaled
    form, where ``nu`` is the price of radiated power (C2 or C3, whichever
    is tighter).
    """

    def __init__(self, q: float, realization: ChannelRealization, params: SystemParams,
                 users: np.ndarray, enforce_rate: bool = True, weights=None):
        self.q = float(q)
        self.params = params
        self.users = np.asarray(users, dtype=int)
        K = params.num_users
        n = realization.num_subcarriers
        nc = self.users.size
        self.K, self.n, self.nc, self.d = K, n, nc, K + 2
        self.W = params.subcarrier_bandwidth
        self.b = self.W / LN2
        w = params.weights if weights is None else np.broadcast_to(np.asarray(weights, float), (K,))
        self.w = w[self.users]
        self.e = realization.transfer_eff  # (n, K)
        self.cnr = realization.cnr[:, self.users].T  # (nc, n)
        idle = realization.idle_transfer[:, self.users].T
        self.cost = self.q * (params.amplifier_inefficiency - idle)  # (nc, n)
        self.budget = params.power_budget
        self.rate_min = params.min_rate if enforce_rate else 0.0
        with np.errstate(divide="ignore"):
            self.inv_cnr = np.where(self.cnr > 0, 1.0 / np.where(self.cnr > 0, self.cnr, 1.0), np.inf)
        self.dead = ~(self.cnr > 0)

        scale = np.ones((nc, self.d))
        scale[:, :K] = np.where(params.min_harvest > 0, params.min_harvest, 1.0)
        scale[:, K] = self.budget
        scale[:, K + 1] = self.rate_min if self.rate_min > 0 else 1.0
        self.scale = scale
        # the served user has no harvesting requirement
        self.req = np.tile(params.min_harvest, (nc, 1))
        self.req[np.arange(nc), self.users] = 0.0
        var = np.ones((nc, self.d), bool)
        var[:, :K] = params.min_harvest[None, :] > 0
        var[np.arange(nc), self.users] = False
        var[:, K + 1] = self.rate_min > 0
        self.var = var
        self.offset = self.q * params.circuit_power
        # magnitude of the objective, used to normalize complementarity
        self.obj_scale = self.b * n * np.maximum(self.w, 1e-12) + self.offset + 1.0

    def split(self, mu_s: np.ndarray):
        mu = mu_s / self.scale
        return mu[:, :self.K], mu[:, self.K], mu[:, self.K + 1]

    def theta(self, alpha, nu):
        return self.cost + nu[:, None] - alpha @ self.e.T

    def evaluate(self, mu_s: np.ndarray, want_hessian: bool = False):
        alpha, nu, gam = self.split(mu_s)
        th = self.theta(alpha, nu)
        A = (self.w + gam) / LN2 * self.W  # (nc,)
        valid = np.all(th > 0, axis=1) & np.isfinite(th).all(axis=1)
        th_safe = np.where(th > 0, th, 1.0)
        level = A[:, None] / th_safe
        with np.errstate(invalid="ignore"):
            P = np.where((th > 0) & ~self.dead, np.maximum(level - self.inv_cnr, 0.0), 0.0)
        act = P > 0
        x = P * self.cnr
        ln1p = np.log1p(x)
        with np.errstate(invalid="ignore"):
            # unbounded multipliers on an infeasible row give inf * 0 here; that row is never accepted
            phi = np.where(act, A[:, None] * ln1p - th_safe * P, 0.0)
        D = phi.sum(axis=1) + nu * self.budget - (alpha * self.req).sum(axis=1) - gam * self.rate_min - self.offset
        D = np.where(valid, D, np.inf)

        rate = self.b * ln1p.sum(axis=1)
        grad = np.empty((self.nc, self.d))
        grad[:, :self.K] = P @ self.e - self.req
        grad[:, self.K] = self.budget - P.sum(axis=1)
        grad[:, self.K + 1] = rate - self.rate_min
        grad_s = np.where(self.var, grad / self.scale, 0.0)

        out = dict(D=D, P=P, theta=th, A=A, valid=valid, grad=grad, grad_s=grad_s, rate=rate)
        if want_hessian:
            n, K, d = self.n, self.K, self.d
            G = np.zeros((self.nc, n, d))
            G[:, :, :K] = -self.e[None, :, :]
            G[:, :, K] = 1.0
            w1 = np.where(act, A[:, None] / th_safe ** 2, 0.0)
            H = np.einsum("cn,cnd,cne->cde", w1, G, G)
            w2 = np.where(act, self.b / th_safe, 0.0)
            cross = np.einsum("cn,cnd->cd", w2, G)
            H[:, :, K + 1] -= cross
            H[:, K + 1, :] -= cross
            with np.errstate(divide="ignore", invalid="ignore"):
                H[:, K + 1, K + 1] += np.where(A > 0, self.b ** 2 / A * act.sum(axis=1), 0.0)
            H /= self.scale[:, :, None] * self.scale[:, None, :]
            out["H"] = H
        return out

    def primal_objective(self, P: np.ndarray, rate: np.ndarray) -> np.ndarray:
        """``w_k * rate - q * (P_C + sum (eps - E) P)`` for each candidate."""
        return self.w * rate - self.offset - (self.cost * P).sum(axis=1)

    def primal_feasible(self, ev: dict, tol: float) -> np.ndarray:
        g = ev["grad"] / self.scale
        g = np.where(self.var | (np.arange(self.d) < self.K), g, np.inf)  # own/zero C1 rows are >= 0 anyway
        g[:, self.K + 1] = np.where(self.rate_min > 0, ev["grad"][:, self.K + 1] / self.scale[:, self.K + 1], np.inf)
        ok = np.all(g >= -tol, axis=1)
        # the grid limit is checked on top of the combined budget through nu; both share P.sum()
        return ok & ev["valid"]

    def initial(self, mu_s: np.ndarray | None = None) -> np.ndarray:
        """Fix alpha and gamma (zeros unless warm-started) and pick the
        smallest power price that keeps the radiated power within budget."""
        mu = np.zeros((self.nc, self.d)) if mu_s is None else np.where(self.var, mu_s, 0.0)
        alpha, _, gam = self.split(mu)
        base = self.cost - alpha @ self.e.T  # theta without nu
        A = (self.w + gam) / LN2 * self.W
        cnr_f = np.where(np.isfinite(self.inv_cnr), self.cnr, 0.0)

        def excess(nu):
            th = base + nu[:, None]
            pos = th > 0
            P = np.where(pos, np.maximum(A[:, None] / np.where(pos, th, 1.0) - self.inv_cnr, 0.0), np.inf)
            P = np.where(~pos & (cnr_f == 0), 0.0, P)
            slope = np.where(P > 0, -A[:, None] / np.where(pos, th, 1.0) ** 2, 0.0).sum(axis=1)
            return P.sum(axis=1) - self.budget, slope

        # total power is convex and decreasing in nu, so Newton started left
        # of the root climbs to it monotonically
        lo = np.maximum(-base.min(axis=1), 0.0)
        f0, _ = excess(lo)
        nu = lo.copy()
        need = ~(f0 <= 0)
        if np.any(need):
            i_min = np.argmin(base, axis=1)
            rows = np.arange(self.nc)
            g = cnr_f[rows, i_min]
            left = A / (self.budget + np.where(g > 0, 1.0 / np.where(g > 0, g, 1.0), np.inf)) - base[rows, i_min]
            nu = np.where(need, np.maximum(left, lo), lo)
            for _ in range(100):
                f, slope = excess(nu)
                step = np.where(need & (f > 0) & (slope < 0), -f / np.where(slope < 0, slope, -1.0), 0.0)
                nu = nu + step
                if np.all(step <= 1e-15 * np.abs(nu) + 1e-300):
                    break
        mu[:, self.K] = nu * self.scale[:, self.K]
        return mu


def _newton_direction(ev: dict, mu_s: np.ndarray, var: np.ndarray, fallback: np.ndarray):
    """Projected Newton direction (Bertsekas): full Newton on the free set,
    diagonally scaled gradient on the epsilon-active set."""
    g = ev["grad_s"]
    H = ev["H"]
    nc, d = g.shape
    diag = np.einsum("cii->ci", H)
    safe_diag = np.where(diag > 0, diag, 1.0 / fallback[:, None])
    # epsilon-active threshold from the scaled projected-gradient residual
    w = np.abs(mu_s - np.maximum(mu_s - g / safe_diag, 0.0))
    eps_act = np.where(var, w, 0.0).max(axis=1, keepdims=True)
    active = var & (mu_s <= eps_act) & (g > 0)
    free = var & ~active
    M = H.copy()
    M[~np.broadcast_to(free[:, :, None] & free[:, None, :], M.shape)] = 0.0
    tau = 1e-12 * np.maximum(np.where(free, diag, 0.0).max(axis=1), 1e-300)
    idx = np.arange(d)
    M[:, idx, idx] += np.where(free, tau[:, None], 1.0)
    rhs = np.where(free, g, 0.0)
    try:
        dirn = np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        dirn = np.stack([np.linalg.lstsq(M[c], rhs[c], rcond=None)[0] for c in range(nc)])
    dirn = np.where(free, dirn, 0.0) + np.where(active, g / safe_diag, 0.0)
    # guard against a non-descent direction from a badly conditioned solve
    bad = np.sum(dirn * np.where(var, g, 0.0), axis=1) < 0
    if np.any(bad):
        dirn[bad] = (g / safe_diag)[bad] * var[bad]
    return dirn, free, active


def _solve_candidates(q: float, realization: ChannelRealization, params: SystemParams, opts: SolverOptions,
                      users=None, enforce_rate: bool = True, warm: np.ndarray | None = None,
                      max_iters: int | None = None, trace: list | None = None, weights=None):
    """Run Layer 1 / Layer 2 for every candidate user until each converges.

    Returns a dict with per-candidate power rows, scaled multipliers,
    objectives, convergence flags and the iteration count.
    """
    users = np.arange(params.num_users) if users is None else np.asarray(users, int)
    prob = _Candidates(q, realization, params, users, enforce_rate, weights)
    max_iters = opts.max_dual_iters if max_iters is None else max_iters
    mu = prob.initial(warm)
    newton = opts.step_rule == "newton"
    ev = prob.evaluate(mu, want_hessian=newton)
    done = np.zeros(prob.nc, bool)
    stalled = np.zeros(prob.nc, bool)
    best_obj = np.full(prob.nc, -np.inf)
    best_P = np.zeros((prob.nc, prob.n))
    best_mu = mu.copy()
    it = 0

    def record(ev, mu):
        feas = prob.primal_feasible(ev, opts.feasibility_tol)
        obj = prob.primal_objective(ev["P"], ev["rate"])
        better = feas & (obj > best_obj)
        best_obj[better] = obj[better]
        best_P[better] = ev["P"][better]
        best_mu[better] = mu[better]

    def converged(ev, mu):
        g = ev["grad_s"]
        viol = np.where(prob.var, np.maximum(-g, 0.0), 0.0).max(axis=1)
        # a relative slack already within tolerance counts as active; large multipliers
        # times rounding-level slack would otherwise never pass
        comp = np.where(prob.var & (g > opts.dual_tolerance), mu * g, 0.0).max(axis=1) / prob.obj_scale
        return (viol <= opts.dual_tolerance) & (comp <= opts.dual_tolerance) & ev["valid"]

    record(ev, mu)
    done |= converged(ev, mu)
    while it < max_iters and not np.all(done | stalled):
        it += 1
        live = ~(done | stalled)
        if newton:
            dirn, free, active = _newton_direction(ev, mu, prob.var, prob.obj_scale)
            g = ev["grad_s"]
            t = np.ones(prob.nc)
            accepted = ~live
            new_mu = mu.copy()
            new_ev = ev
            for _ in range(60):
                trial = np.where(live[:, None] & ~accepted[:, None], np.maximum(mu - t[:, None] * dirn, 0.0), new_mu)
                trial = np.where(prob.var, trial, 0.0)
                tev = prob.evaluate(trial)
                pred = (np.where(free, g * t[:, None] * dirn, 0.0)
                        + np.where(active, g * (mu - trial), 0.0)).sum(axis=1)
                ok = tev["D"] <= ev["D"] - 1e-4 * pred
                # near the optimum the decrease drowns in rounding; accept non-increase
                ok |= (tev["D"] <= ev["D"] + 1e-12 * prob.obj_scale) & (pred <= 1e-10 * prob.obj_scale)
                take = ok & ~accepted
                new_mu[take] = trial[take]
                accepted |= ok
                if np.all(accepted):
                    break
                t = np.where(accepted, t, 0.5 * t)
            stalled |= live & ~accepted
            mu = new_mu
        else:
            xi = step_sizes(it - 1, opts)
            per_var = np.empty(prob.d)
            per_var[:prob.K] = xi[0]
            per_var[prob.K] = xi[1] if params.max_tx_power <= params.power_budget * (1 + 1e-12) else xi[3]
            per_var[prob.K + 1] = xi[2]
            step = per_var[None, :] * prob.obj_scale[:, None]
            trial = np.where(prob.var, np.maximum(mu - step * ev["grad_s"], 0.0), 0.0)
            # keep iterates inside the dual domain (finite water levels)
            tev = prob.evaluate(trial)
            bad = ~tev["valid"]
            if np.any(bad):
                trial[bad] = _reprice(prob, trial, bad)
            mu = np.where(live[:, None], trial, mu)
        ev = prob.evaluate(mu, want_hessian=newton)
        record(ev, mu)
        done |= converged(ev, mu)
        if trace is not None:
            trace.append(dict(iteration=it, q=q, dual=ev["D"].copy(), converged=done.copy()))

    final_feas = prob.primal_feasible(ev, opts.feasibility_tol)
    final_obj = prob.primal_objective(ev["P"], ev["rate"])
    # prefer the final iterate when it is feasible; otherwise the best feasible one seen
    use_final = final_feas & (done | (final_obj >= best_obj))
    P = np.where(use_final[:, None], ev["P"], best_P)
    obj = np.where(use_final, final_obj, best_obj)
    mus = np.where(use_final[:, None], mu, best_mu)
    feasible = use_final | np.isfinite(best_obj)
    return dict(prob=prob, users=users, P=P, mu=mus, objective=obj, feasible=feasible,
                converged=done, stalled=stalled, iterations=it, dual=ev["D"], final_mu=mu)


def _reprice(prob: _Candidates, trial: np.ndarray, bad: np.ndarray) -> np.ndarray:
    """Raise the power price of rows whose water level diverged."""
    fixed = prob.initial(trial)
    out = trial.copy()
    out[bad, prob.K] = np.maximum(trial[bad, prob.K], fixed[bad, prob.K])
    return out[bad]


def _duals_from_scaled(mu_s: np.ndarray, prob: _Candidates, params: SystemParams) -> DualState:
    mu = mu_s / prob.scale[0]
    K = params.num_users
    nu = float(mu[K])
    if params.max_tx_power <= (params.grid_power - params.circuit_power) / params.amplifier_inefficiency:
        beta, lam = nu, 0.0
    else:
        beta, lam = 0.0, nu / params.amplifier_inefficiency
    return DualState(mu[:K].copy(), beta=beta, gamma=float(mu[K + 1]), lambda_=lam)


def solve_inner(q: float, realization: ChannelRealization, params: SystemParams,
                opts: SolverOptions | None = None, candidates=None, warm=None,
                max_iters: int | None = None, collect_trace: bool = False) -> InnerSolution:
    """Maximize ``U - q U_TP`` over power and (single-user) selection.

    ``candidates`` restricts the users considered (default: all).  ``warm``
    is a ``(K, K+2)`` array of scaled multipliers from a previous call.
    Raises :class:`InfeasibleError` when no candidate admits a feasible
    allocation.
    """
    opts = opts or SolverOptions()
    if q < 0:
        raise ValueError("q must be nonnegative")
    K = params.num_users
    users = np.arange(K) if candidates is None else np.asarray(candidates, int)
    if users.size == 0:
        raise InfeasibleError("no candidate users")
    warm_rows = None if warm is None else np.asarray(warm)[users]
    trace = [] if collect_trace else None
    res = _solve_candidates(q, realization, params, opts, users, warm=warm_rows, max_iters=max_iters, trace=trace)
    prob = res["prob"]

    full_obj = np.full(K, -np.inf)
    full_obj[users] = np.where(res["feasible"], res["objective"], -np.inf)
    full_feas = np.zeros(K, bool)
    full_feas[users] = res["feasible"]
    if not full_feas.any():
        raise InfeasibleError(f"no feasible candidate at q={q:g} after {res['iterations']} iterations")

    s = select_user(np.where(full_feas, full_obj, -np.inf))
    k = int(np.argmax(s))
    row = int(np.flatnonzero(users == k)[0])
    policy = AllocationPolicy.single_user(k, res["P"][row], K)

    duals = _duals_from_scaled(res["mu"][row], prob, params)
    # marginal benefit of each candidate at its own multipliers
    Q = np.zeros(K)
    for r, u in enumerate(users):
        g = float(res["mu"][r, K + 1] / prob.scale[r, K + 1])
        x = res["P"][r] * prob.cnr[r]
        Q[u] = params.subcarrier_bandwidth * (params.weights[u] + g) * _benefit_terms(x).sum()
    duals.delta = float(Q[k])
    duals.m = res["iterations"]
    warm_out = np.zeros((K, K + 2))
    warm_out[users] = res["final_mu"]
    sol = InnerSolution(policy, duals, Q, float(full_obj[k]), bool(res["converged"][row]), res["iterations"],
                        True, full_obj, full_feas, trace or [])
    sol.warm = warm_out
    return sol


# --------------------------------------------------------------------------
# feasibility screen

@dataclass
class FeasibilityReport:
    feasible: bool
    candidate_feasible: np.ndarray
    max_rate: np.ndarray  # best rate per candidate with C1-C3 enforced (nan if C1-C3 infeasible)
    reasons: list

    def feasible_users(self) -> np.ndarray:
        return np.flatnonzero(self.candidate_feasible)


def _harvest_lp(e_idle: np.ndarray, req: np.ndarray, budget: float):
    """Max of ``min_j (sum_i P_i e_ij) / req_j`` with ``sum P <= budget``.
    Returns (ratio, P)."""
    n, J = e_idle.shape
    # variables: P (n), t ; maximize t
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.zeros((J + 1, n + 1))
    A_ub[:J, :n] = -(e_idle / req[None, :]).T
    A_ub[:J, -1] = 1.0
    A_ub[J, :n] = 1.0 / budget
    b_ub = np.zeros(J + 1)
    b_ub[J] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(0, None)] * (n + 1), method="highs")
    if res.status != 0:
        return 0.0, np.zeros(n)
    return float(-res.fun), res.x[:n] * 1.0


def check_feasibility(realization: ChannelRealization, params: SystemParams,
                      opts: SolverOptions | None = None) -> FeasibilityReport:
    """Decide, per candidate user, whether C1-C4 can be met when it is served.

    C1-C3 are linear in the powers, so their joint satisfiability is an LP
    (maximize the worst normalized harvest under the power budget), screened
    first by the cheap necessary condition ``budget * max_i e_ij >= P_min_j``.
    The rate requirement is then tested at the best rate reachable under
    C1-C3, computed with the dual solver at ``q = 0``.
    """
    opts = opts or SolverOptions()
    K = params.num_users
    budget = params.power_budget
    e = realization.transfer_eff
    req = params.min_harvest
    W = params.subcarrier_bandwidth
    ok = np.zeros(K, bool)
    max_rate = np.full(K, np.nan)
    reasons = []
    linear_ok = np.zeros(K, bool)
    for k in range(K):
        idle = [j for j in range(K) if j != k and req[j] > 0]
        if idle:
            best_single = budget * e[:, idle].max(axis=0)
            if np.any(best_single < req[idle] * (1 - 1e-12)):
                reasons.append(f"user {k}: idle user(s) {[idle[i] for i in np.flatnonzero(best_single < req[idle])]} "
                               "cannot reach their harvesting requirement")
                continue
            uniform = np.full(realization.num_subcarriers, budget / realization.num_subcarriers)
            if np.all(uniform @ e[:, idle] >= req[idle]):
                ratio, point = np.inf, uniform
            else:
                ratio, point = _harvest_lp(e[:, idle], req[idle], budget)
            if ratio < 1.0 - 1e-9:
                reasons.append(f"user {k}: harvesting requirements not jointly reachable (ratio {ratio:.4g})")
                continue
            # any point meeting C1-C3 with enough rate settles it
            if W * np.log2(1.0 + point * realization.cnr[:, k]).sum() >= params.min_rate:
                ok[k] = True
                continue
        linear_ok[k] = True
        # without C1 the best rate is classic water-filling; it upper-bounds the C1-constrained rate
        if params.min_rate <= 0:
            ok[k] = True
            continue
        ub = _waterfill_rate(realization.cnr[:, k], budget, W)
        if ub < params.min_rate * (1 - 1e-12):
            max_rate[k] = ub
            reasons.append(f"user {k}: rate {ub:.4g} bit/s below the minimum even at full power")
            continue
        if not idle:
            max_rate[k] = ub
            ok[k] = True
    pending = np.flatnonzero(linear_ok & ~ok & np.isnan(max_rate))
    if pending.size:
        res = _solve_candidates(0.0, realization, params, opts, users=pending, enforce_rate=False,
                                weights=np.ones(K))
        for r, k in enumerate(pending):
            rate = res["prob"].b * np.log1p(res["P"][r] * res["prob"].cnr[r]).sum() if res["feasible"][r] else np.nan
            max_rate[k] = rate
            if res["feasible"][r] and rate >= params.min_rate * (1 - opts.feasibility_tol):
                ok[k] = True
            else:
                reasons.append(f"user {k}: best rate under harvesting constraints {rate:.4g} bit/s too low")
    return FeasibilityReport(bool(ok.any()), ok, max_rate, reasons)


def _waterfill_rate(cnr: np.ndarray, budget: float, W: float) -> float:
    """Rate of classic water-filling over one user's subcarriers."""
    g = np.sort(cnr[cnr > 0])[::-1]
    if g.size == 0:
        return 0.0
    inv = 1.0 / g
    csum = np.cumsum(inv)
    counts = np.arange(1, g.size + 1)
    levels = (budget + csum) / counts
    valid = levels > inv
    n_act = int(np.flatnonzero(valid)[-1]) + 1
    level = levels[n_act - 1]
    P = np.maximum(level - inv, 0.0)
    return float(W * np.log2(1.0 + P * g).sum())
