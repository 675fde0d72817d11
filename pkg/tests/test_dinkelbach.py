import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import toy_params
from swipt_ee import metrics
from swipt_ee.dinkelbach import baseline_capacity_max, f_value, maximize_ee
from swipt_ee.dual_solver import SolverOptions, solve_inner
from swipt_ee.metrics import AllocationPolicy
from swipt_ee.oracle import grid_oracle
from swipt_ee.system_model import ChannelRealization, default_params, sample_realization


def test_f_value_definition_and_linearity():
    p = default_params(3, 30.0)
    r = sample_realization(p, 2)
    sol = solve_inner(0.0, r, p)
    U = metrics.capacity(sol.policy, r, p)
    TP = metrics.total_power(sol.policy, r, p)
    assert f_value(0.0, sol, r, p) == pytest.approx(U)
    assert f_value(U / TP, sol, r, p) == pytest.approx(0.0, abs=1e-6 * U)
    assert f_value(2e6, sol, r, p) - f_value(3e6, sol, r, p) == pytest.approx(1e6 * TP, rel=1e-9)


def test_single_policy_instance_needs_one_update():
    # one user, one subcarrier, rate requirement equal to the rate at full power:
    # the only feasible policy radiates the whole budget
    p = toy_params(1, 1, 24.0)
    r = sample_realization(p, 0)
    full = p.subcarrier_bandwidth * np.log2(1 + p.power_budget * r.cnr[0, 0])
    p = p.with_(min_rate=full * (1 - 1e-12))
    rep = maximize_ee(r, p)
    pol = AllocationPolicy.single_user(0, [p.power_budget], 1)
    assert rep.feasible and rep.converged
    assert rep.q == pytest.approx(metrics.energy_efficiency(pol, r, p), rel=1e-9)
    assert rep.outer_iterations == 2  # q = 0 solve, then the confirming solve at q*


@pytest.mark.parametrize("seed", range(6))
def test_toy_instance_matches_oracle(seed):
    p = toy_params(2, 2, 24.0)
    r = sample_realization(p, seed)
    rep = maximize_ee(r, p)
    fine, coarse = grid_oracle(r, p, 400), grid_oracle(r, p, 200)
    gap = abs(fine.energy_efficiency - coarse.energy_efficiency) / max(fine.energy_efficiency, 1.0)
    assert abs(rep.q - fine.energy_efficiency) / max(fine.energy_efficiency, 1.0) <= max(2 * gap, 1e-3)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), K=st.sampled_from([1, 2, 4]), pmax=st.sampled_from([20.0, 30.0, 40.0]))
def test_trace_properties(seed, K, pmax):
    p = default_params(K, pmax)
    r = sample_realization(p, seed)
    rep = maximize_ee(r, p)
    if not rep.feasible:
        assert rep.q == 0.0 and rep.capacity == 0.0 and rep.harvested_power == 0.0
        return
    qs = [t["q"] for t in rep.trace]
    Fs = [t["F"] for t in rep.trace]
    assert qs[0] == 0.0 and np.all(np.diff(qs) >= 0)
    assert np.all(np.diff(Fs) <= 1e-9 * Fs[0])
    assert min(Fs) >= -1e-6 * rep.capacity
    assert rep.converged and abs(rep.f_final) < 1e-6 * rep.capacity
    assert rep.outer_iterations <= 10
    assert rep.q == pytest.approx(metrics.energy_efficiency(rep.policy, r, p), rel=1e-9)
    assert rep.constraints.feasible


@pytest.mark.parametrize("seed", range(8))
def test_baseline_identities(seed):
    p = default_params(4, 36.0)
    r = sample_realization(p, seed)
    prop, base = maximize_ee(r, p), baseline_capacity_max(r, p)
    assert prop.feasible == base.feasible
    if prop.feasible:
        assert prop.q >= base.q * (1 - 1e-9)
        assert base.capacity >= prop.capacity * (1 - 1e-9)
        assert base.outer_iterations == 1 and base.trace[0]["q"] == 0.0


def test_tiny_power_limit_schemes_coincide():
    p = default_params(1, 0.0)
    r = sample_realization(p, 0)
    assert maximize_ee(r, p).capacity == pytest.approx(baseline_capacity_max(r, p).capacity, rel=1e-2)


def test_infeasible_follows_failure_convention():
    p = default_params(2)
    r = ChannelRealization.from_gains(np.zeros((128, 2)), 1e-4, p)
    for rep in (maximize_ee(r, p), baseline_capacity_max(r, p)):
        assert not rep.feasible and rep.status == "infeasible"
        assert rep.energy_efficiency == rep.capacity == rep.harvested_power == 0.0


def test_outer_limit_flags_unconverged():
    p = default_params(4, 40.0)
    r = sample_realization(p, 1)
    rep = maximize_ee(r, p, SolverOptions(max_outer_iters=1))
    assert rep.feasible and not rep.converged and rep.status == "unconverged"
    assert rep.outer_iterations == 1


def test_iteration_budget_is_monotone():
    p = default_params(4, 30.0)
    r = sample_realization(p, 5)
    ees = [maximize_ee(r, p, iteration_budget=b).q for b in (1, 2, 5, 10, 30, 200)]
    assert ees == sorted(ees)
    assert maximize_ee(r, p, iteration_budget=200).converged


def test_report_record_and_trace_file(tmp_path):
    p = default_params(3, 30.0)
    r = sample_realization(p, 0)
    rep = maximize_ee(r, p)
    rec = rep.to_record()
    assert rec["energy_efficiency"] == rep.q and rec["selected_user"] == rep.selected_user
    path = tmp_path / "trace.csv"
    rep.write_trace(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("outer,q,U,U_TP,F") and len(lines) == len(rep.trace) + 1


def test_deterministic():
    p = default_params(4, 30.0)
    r = sample_realization(p, 3)
    a, b = maximize_ee(r, p), maximize_ee(r, p)
    assert a.q == b.q and a.trace == b.trace
