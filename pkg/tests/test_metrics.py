
import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swipt_ee import metrics
from swipt_ee.metrics import AllocationPolicy, ModelViolationError, check_constraints
from swipt_ee.system_model import ChannelRealization, default_params, sample_realization


def _params(K=2, n=1, **kw):
    base = dict(total_bandwidth=39000.0 * n, num_subcarriers=n, circuit_power=10.0, grid_power=100.0,
                amplifier_inefficiency=2.5, max_tx_power=1.0)
    base.update(kw)
    return default_params(K).with_(**base)


def _channel(p, cnr, eff):
    """Realization with exactly the given CNR and transfer-efficiency matrices."""
    cnr = np.atleast_2d(np.asarray(cnr, float))
    eff = np.atleast_2d(np.asarray(eff, float))
    nan = np.full(cnr.shape[1], np.nan)
    return ChannelRealization(np.ones_like(cnr), nan, nan, nan, cnr, eff)


def test_zero_policy():
    p = _params()
    r = _channel(p, [[1.0, 1.0]], [[0.1, 0.3]])
    pol = AllocationPolicy.zeros(1, 2)
    assert metrics.capacity(pol, r, p) == 0.0
    assert metrics.harvested_power(pol, r) == 0.0
    assert metrics.total_power(pol, r, p) == p.circuit_power
    assert metrics.energy_efficiency(pol, r, p) == 0.0


def test_one_bit_per_hertz_subcarrier():
    p = _params(K=1)
    r = _channel(p, [[2.0]], [[0.0]])
    pol = AllocationPolicy.single_user(0, [0.5], 1)  # P * Gamma = 1
    assert metrics.capacity(pol, r, p) == pytest.approx(39000.0, rel=1e-14)


def test_weights_scale_utility_not_rate():
    p = _params(K=1)
    r = _channel(p, [[2.0]], [[0.0]])
    pol = AllocationPolicy.single_user(0, [0.5], 1)
    p2 = p.with_(weights=2.0)
    assert metrics.capacity(pol, r, p2) == pytest.approx(2 * metrics.capacity(pol, r, p))
    assert metrics.sum_rate(pol, r, p2) == metrics.sum_rate(pol, r, p)


def test_harvest_and_dissipation_hand_values():
    p = _params(K=2)
    r = _channel(p, [[1.0, 1.0]], [[0.2, 0.3]])
    pol = AllocationPolicy.single_user(0, [1.0], 2)
    assert metrics.harvested_power(pol, r) == pytest.approx(0.3)
    # 10 + 2.5 * 1 - 0.3
    assert metrics.total_power(pol, r, p) == pytest.approx(12.2)


def test_energy_efficiency_hand_value():
    p = _params(K=2)
    r = _channel(p, [[1.0, 1.0]], [[0.2, 0.3]])
    pol = AllocationPolicy.single_user(0, [1.0], 2)  # P * Gamma = 1 -> 39 kbit/s
    assert metrics.energy_efficiency(pol, r, p) == pytest.approx(39000 / 12.2, rel=1e-12)
    assert 39000 / 12.2 == pytest.approx(3196.7, abs=0.05)


def test_single_user_harvests_nothing():
    p = default_params(1)
    r = sample_realization(p, 0)
    pol = AllocationPolicy.single_user(0, np.full(128, 0.01), 1)
    assert metrics.harvested_power(pol, r) == 0.0


def test_model_violation_when_harvest_exceeds_consumption():
    p = _params(K=2, circuit_power=1e-3, grid_power=100.0)
    r = _channel(p, [[1.0, 1.0]], [[0.0, 3.0]])  # idle efficiency above eps
    pol = AllocationPolicy.single_user(0, [1.0], 2)
    with pytest.raises(ModelViolationError):
        metrics.energy_efficiency(pol, r, p)


def test_shape_mismatch_rejected():
    p = default_params(2)
    r = sample_realization(p, 0)
    with pytest.raises(ValueError):
        metrics.capacity(AllocationPolicy.zeros(4, 2), r, p)


def test_capacity_matches_extended_precision_loop():
    p = default_params(3).with_(num_subcarriers=16, total_bandwidth=16 * 39062.5)
    r = sample_realization(p, 2)
    rng = np.random.default_rng(0)
    P = rng.uniform(0, 0.05, size=(16, 3))
    s = np.array([0.2, 0.5, 0.3])
    pol = AllocationPolicy(P, s)
    mpmath.mp.dps = 40
    ref = mpmath.mpf(0)
    for i in range(16):
        for k in range(3):
            ref += mpmath.mpf(s[k]) * mpmath.mpf(p.subcarrier_bandwidth) * mpmath.log(
                1 + mpmath.mpf(P[i, k]) * mpmath.mpf(r.cnr[i, k]), 2)
    assert metrics.capacity(pol, r, p) == pytest.approx(float(ref), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), perm_seed=st.integers(0, 10_000))
def test_energy_efficiency_invariant_to_subcarrier_permutation(seed, perm_seed):
    p = default_params(3).with_(num_subcarriers=8, total_bandwidth=8 * 39062.5)
    r = sample_realization(p, seed)
    rng = np.random.default_rng(perm_seed)
    pol = AllocationPolicy.single_user(int(rng.integers(3)), rng.uniform(0, 0.1, 8), 3)
    perm = rng.permutation(8)
    rp = ChannelRealization(r.fading_power[perm], r.path_loss, r.shadowing, r.distances,
                            r.cnr[perm], r.transfer_eff[perm])
    polp = AllocationPolicy(pol.power[perm], pol.selection)
    assert metrics.energy_efficiency(polp, rp, p) == pytest.approx(metrics.energy_efficiency(pol, r, p), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_dissipation_lower_bound_identity(seed):
    p = default_params(4).with_(num_subcarriers=8, total_bandwidth=8 * 39062.5)
    r = sample_realization(p, seed)
    rng = np.random.default_rng(seed)
    pol = AllocationPolicy.single_user(int(rng.integers(4)), rng.uniform(0, 1, 8), 4)
    radiated = metrics.radiated_power(pol)
    emax = r.idle_transfer.max()
    assert metrics.harvested_power(pol, r) <= emax * radiated * (1 + 1e-12)
    lower = p.circuit_power + (p.amplifier_inefficiency - emax) * radiated
    assert metrics.total_power(pol, r, p) >= lower - 1e-12 * p.circuit_power


def test_ratio_invariance():
    # U and U_TP scaled together: double bandwidth and double every power term
    p = _params(K=1)
    r = _channel(p, [[2.0]], [[0.0]])
    pol = AllocationPolicy.single_user(0, [0.5], 1)
    p2 = p.with_(total_bandwidth=2 * p.total_bandwidth, circuit_power=2 * p.circuit_power,
                 amplifier_inefficiency=2 * p.amplifier_inefficiency, grid_power=2 * p.grid_power)
    assert metrics.energy_efficiency(pol, r, p2) == pytest.approx(metrics.energy_efficiency(pol, r, p))


def test_zero_policy_violates_every_harvest_requirement():
    p = default_params(3)
    r = sample_realization(p, 0)
    rep = check_constraints(AllocationPolicy.zeros(128, 3), r, p)
    assert np.all(rep.c1 < 0) and not rep.feasible


def test_served_user_has_no_harvest_requirement():
    p = default_params(1)
    r = sample_realization(p, 0)
    pol = AllocationPolicy.single_user(0, np.full(128, 1.0 / 128), 1)
    rep = check_constraints(pol, r, p)
    assert rep.c1[0] >= 0


def test_power_limit_boundary():
    p = default_params(1)
    r = sample_realization(p, 0)
    pol = AllocationPolicy.single_user(0, np.full(128, p.max_tx_power / 128), 1)
    rep = check_constraints(pol, r, p)
    assert rep.c2 == pytest.approx(0.0, abs=1e-15)
    assert rep.normalized["c2"] >= -1e-6 and rep.feasible


def test_structural_flags_and_record():
    p = default_params(2)
    r = sample_realization(p, 0)
    rep = check_constraints(AllocationPolicy(np.full((128, 2), -1.0), [0.5, 0.5]), r, p)
    assert rep.c6_violated and rep.c7_violated and not rep.feasible
    rec = rep.to_record()
    assert {"c1_user0", "c1_user1", "c2", "c3", "c4", "c5", "feasible"} <= rec.keys()


def test_tolerance_must_be_positive():
    p = default_params(1)
    r = sample_realization(p, 0)
    with pytest.raises(ValueError):
        check_constraints(AllocationPolicy.zeros(128, 1), r, p, tol=0.0)
