"""Acceptance gate: the ten numbered criteria at their stated tolerances.

Each test prints one ``CRITERION n: PASS|FAIL`` line (also repeated in the
terminal summary) and then asserts the verdict.  Criteria 6-9 share one
1000-realization sweep over the default grid, so the module takes a
while to run.
"""

import math
import time

import numpy as np
import pytest

from conftest import toy_params
from swipt_ee import experiments, metrics
from swipt_ee.dinkelbach import baseline_capacity_max, maximize_ee
from swipt_ee.dual_solver import SolverOptions, check_feasibility
from swipt_ee.oracle import grid_oracle, kkt_residual, richardson_gap
from swipt_ee.system_model import default_params, sample_realization

VERDICTS = {}

SEED = 20240
N_REALIZATIONS = 1000


def verdict(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[n] = line
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# shared data

@pytest.fixture(scope="module")
def feasible_pool():
    """1000 feasible full-size instances with K <= 8, solved by both schemes."""
    rng = np.random.default_rng(SEED)
    opts = SolverOptions()
    pool = []
    index = 0
    while len(pool) < 1000:
        K = int(rng.integers(1, 9))
        pmax = float(rng.uniform(10.0, 46.0))
        params = default_params(K, pmax)
        channel = sample_realization(params, SEED, index)
        index += 1
        fr = check_feasibility(channel, params, opts)
        if not fr.feasible:
            continue
        prop = maximize_ee(channel, params, opts, feasibility=fr)
        base = baseline_capacity_max(channel, params, opts, feasibility=fr)
        pool.append((params, channel, prop, base))
    return pool


@pytest.fixture(scope="module")
def sweep():
    spec = experiments.ExperimentSpec(realizations=N_REALIZATIONS, seed=SEED)
    return spec, experiments.sweep_pmax(spec)


def _nondecreasing(means, ses, n_se=2.0):
    """Indices j where means[j+1] falls more than n_se combined standard
    errors below means[j]."""
    m, s = np.asarray(means), np.asarray(ses)
    drop = m[:-1] - m[1:]
    return [j for j in range(len(m) - 1) if drop[j] > n_se * math.hypot(s[j], s[j + 1])]


# ---------------------------------------------------------------------------
# 1-5: solver properties

def test_criterion_1_oracle_equivalence():
    opts = SolverOptions()
    t0 = time.perf_counter()
    worst, worst_excess, feasible = 0.0, -np.inf, 0
    for i in range(200):
        K = 2 + i % 2
        n = 2 if (i // 2) % 2 == 0 else 4
        fine, coarse = (400, 200) if n == 2 else (100, 50)
        params = toy_params(K, n)
        channel = sample_realization(params, SEED, i)
        of = grid_oracle(channel, params, fine)
        oc = grid_oracle(channel, params, coarse)
        rep = maximize_ee(channel, params, opts)
        feasible += of.feasible
        dev = abs(rep.energy_efficiency - of.energy_efficiency) / max(of.energy_efficiency, 1.0)
        bound = max(richardson_gap(of, oc), 1e-3)
        worst = max(worst, dev)
        worst_excess = max(worst_excess, dev - bound)
    elapsed = time.perf_counter() - t0
    ok = worst_excess <= 0 and elapsed < 300
    verdict(1, ok, f"200 instances ({feasible} feasible), max deviation {worst:.2e}, "
                   f"max excess over bound {worst_excess:.2e}, {elapsed:.0f} s")


def test_criterion_2_dinkelbach_properties(feasible_pool):
    eps = SolverOptions().dinkelbach_epsilon
    bad = []
    for i, (_, _, rep, _) in enumerate(feasible_pool):
        qs = [row["q"] for row in rep.trace]
        mono = all(b >= a for a, b in zip(qs, qs[1:]))
        f_ok = abs(rep.f_final) < eps * rep.capacity
        if not (rep.converged and mono and f_ok and rep.outer_iterations <= 10):
            bad.append(i)
    outer = max(rep.outer_iterations for _, _, rep, _ in feasible_pool)
    verdict(2, not bad, f"{len(feasible_pool)} feasible instances, {len(bad)} violations, "
                        f"max outer iterations {outer}")


def test_criterion_3_kkt(feasible_pool):
    res = [kkt_residual(rep.policy, rep.duals, rep.inner_q, ch, p) for p, ch, rep, _ in feasible_pool[:100]]
    worst = max(res)
    verdict(3, worst < 1e-4, f"100 instances, max kkt residual {worst:.2e}")


def test_criterion_4_constraints(feasible_pool):
    bad, worst = 0, 0.0
    for params, channel, prop, base in feasible_pool:
        for rep in (prop, base):
            cr = metrics.check_constraints(rep.policy, channel, params, tol=1e-4, structural_tol=1e-6)
            bad += not cr.feasible
            worst = min(worst, cr.worst())
    verdict(4, bad == 0, f"{2 * len(feasible_pool)} policies, {bad} failing, "
                         f"worst normalized residual {worst:.2e}")


def test_criterion_5_convergence_trend():
    spec = experiments.ExperimentSpec(realizations=N_REALIZATIONS, seed=SEED, budgets=(30, 200))
    t0 = time.perf_counter()
    rows = experiments.run_convergence(spec)
    elapsed = time.perf_counter() - t0
    ratios = {}
    for K, pm in spec.convergence_configs:
        ee = {r.budget: r.mean_ee_bit_per_joule for r in rows if r.K == K and r.pmax_dbm == pm}
        ratios[(K, pm)] = ee[30] / ee[200] if ee[200] > 0 else 1.0
    ok = all(r >= 0.99 for r in ratios.values()) and elapsed < 900
    detail = ", ".join(f"K={K} {pm:g} dBm {r:.4f}" for (K, pm), r in ratios.items())
    verdict(5, ok, f"EE(30)/EE(200): {detail}; {elapsed:.0f} s")


# ---------------------------------------------------------------------------
# 6-9: the P_max x K sweep

def test_criterion_6_saturation(sweep):
    spec, res = sweep
    problems = []
    for K in spec.users:
        _, m, s = res.series("mean_ee_bit_per_joule", K, "proposed")
        for j in _nondecreasing(m, s):
            problems.append(f"K={K} proposed drops after {spec.pmax_dbm[j]:g} dBm")
        if abs(m[-1] - m[-2]) >= 0.02 * max(abs(m[-1]), abs(m[-2])):
            problems.append(f"K={K} last two points differ by {abs(m[-1] - m[-2]) / m[-1]:.2%}")
        _, b, _ = res.series("mean_ee_bit_per_joule", K, "baseline")
        if not b[-1] < 0.8 * max(b):
            problems.append(f"K={K} baseline top {b[-1]:.3e} vs peak {max(b):.3e}")
    verdict(6, not problems, "; ".join(problems) or f"all K in {spec.users}")


def test_criterion_7_multiuser_gain(sweep):
    spec, res = sweep
    problems = []  # (pmax, description)
    for pm in spec.pmax_dbm:
        for metric, se, users in (("mean_ee_bit_per_joule", "se_ee", spec.users),
                                  ("mean_capacity_bps", "se_capacity", spec.users),
                                  ("mean_harvested_w", "se_harvested", [K for K in spec.users if K >= 2])):
            cells = [res.cell(pm, K, "proposed") for K in users]
            m = [getattr(c, metric) for c in cells]
            s = [getattr(c, se) for c in cells]
            for j in _nondecreasing(m, s):
                problems.append((pm, f"{metric} K={users[j]}->{users[j + 1]} {m[j]:.3e}->{m[j + 1]:.3e}"))
    for pm, text in problems:
        print(f"  drop at {pm:g} dBm: {text}")
    hit = sorted({pm for pm, _ in problems})
    detail = f"{len(problems)} drops beyond 2 SE"
    if hit:
        lo = hit[0]
        fails = ", ".join(f"K={K} {res.cell(lo, K, 'proposed').failure_rate:.0%}" for K in spec.users)
        detail += f" at P_max {', '.join(f'{pm:g}' for pm in hit)} dBm; infeasible share at {lo:g} dBm: {fails}"
    verdict(7, not problems, detail)


def test_criterion_8_low_power(sweep):
    spec, res = sweep
    pm = min(spec.pmax_dbm)
    problems = []
    for K in spec.users:
        cp = res.cell(pm, K, "proposed").mean_capacity_bps
        cb = res.cell(pm, K, "baseline").mean_capacity_bps
        if abs(cp - cb) > 0.01 * cb:
            problems.append(f"K={K} proposed {cp:.4e} baseline {cb:.4e}")
    verdict(8, not problems, "; ".join(problems) or f"capacities within 1% at {pm:g} dBm for all K")


def test_criterion_9_dominance(sweep):
    _, res = sweep
    ee_bad = cap_bad = 0
    for s in res.samples.values():
        ee_bad += int(np.sum(s["proposed_ee"] < s["baseline_ee"] * 0.99))
        cap_bad += int(np.sum(s["baseline_capacity"] < s["proposed_capacity"] * 0.99))
    total = sum(len(s["proposed_ee"]) for s in res.samples.values())
    verdict(9, ee_bad == 0 and cap_bad == 0,
            f"{total} paired realizations, {ee_bad} EE and {cap_bad} capacity violations")


# ---------------------------------------------------------------------------
# 10: determinism

def test_criterion_10_determinism(tmp_path):
    spec = experiments.ExperimentSpec(realizations=24, seed=SEED, budgets=(1, 5, 30))
    blobs = {}
    for run, workers in (("a", 1), ("b", 1), ("c", 8), ("d", 8)):
        s = experiments.ExperimentSpec(**{**spec.__dict__, "workers": workers})
        sweep_path = experiments.emit_csv(experiments.sweep_pmax(s), tmp_path / f"sweep_{run}.csv")
        conv_path = experiments.emit_convergence_csv(experiments.run_convergence(s), tmp_path / f"conv_{run}.csv")
        blobs[run] = (sweep_path.read_bytes(), conv_path.read_bytes())
    ok = len(set(blobs.values())) == 1
    verdict(10, ok, "sweep and convergence CSVs byte-identical for workers 1, 1, 8, 8" if ok
            else "CSV output differs between runs")
