"""Walk through one channel realization end to end.

Draws the default indoor scenario, screens it for feasibility, runs the
fractional loop and the capacity-maximizing baseline, and then audits the
returned policy against the constraints and the optimality conditions.

    python demos/single_solve.py --seed 7 --users 4 --pmax-dbm 30
"""

import argparse

import numpy as np

from swipt_ee import (baseline_capacity_max, check_constraints, check_feasibility, default_params,
                      kkt_residual, maximize_ee, sample_realization, watt_to_dbm)
from swipt_ee.metrics import harvest_per_user


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--index", type=int, default=0)
    ap.add_argument("--users", type=int, default=4)
    ap.add_argument("--pmax-dbm", type=float, default=30.0)
    args = ap.parse_args()

    params = default_params(args.users, args.pmax_dbm)
    channel = sample_realization(params, args.seed, args.index)
    print(f"{params.num_users} users, {params.num_subcarriers} subcarriers of "
          f"{params.subcarrier_bandwidth / 1e3:.2f} kHz, P_max {args.pmax_dbm:g} dBm")
    print("user distances [m]:", np.round(channel.distances, 2))
    print("mean CNR per user [dB]:", np.round(10 * np.log10(channel.cnr.mean(axis=0)), 1))

    fr = check_feasibility(channel, params)
    if not fr.feasible:
        print("\nno user can be served under the rate and harvesting constraints:")
        for reason in fr.reasons:
            print("  ", reason)
        return
    print(f"\nusers that can be served: {fr.feasible_users().tolist()}")

    prop = maximize_ee(channel, params, feasibility=fr)
    print("\nfractional loop (q is the running bits-per-Joule estimate):")
    print(f"{'outer':>5} {'q [bit/J]':>14} {'U [bit/s]':>14} {'U_TP [W]':>10} {'F':>12} {'inner':>6} {'user':>5}")
    for row in prop.trace:
        print(f"{row['outer']:>5} {row['q']:>14.6e} {row['U']:>14.6e} {row['U_TP']:>10.4f} "
              f"{row['F']:>12.3e} {row['inner_iterations']:>6} {row['selected_user']:>5}")

    base = baseline_capacity_max(channel, params, feasibility=fr)
    print("\n           EE [bit/J]   capacity [bit/s]   P_TX [dBm]   harvested [W]")
    for name, rep in (("proposed", prop), ("baseline", base)):
        ptx = watt_to_dbm(rep.policy.power.sum())
        print(f"{name:<9}{rep.energy_efficiency:>13.5e}{rep.capacity:>19.5e}{ptx:>13.2f}"
              f"{rep.harvested_power:>16.4e}")
    print(f"EE gain over the baseline: {prop.energy_efficiency / base.energy_efficiency - 1:+.2%}")

    k = prop.selected_user
    harvest = harvest_per_user(prop.policy, channel)
    idle = [j for j in range(params.num_users) if j != k]
    print(f"\nserved user {k}; idle users harvest [dBm]:",
          np.round([watt_to_dbm(harvest[j]) for j in idle], 2), "(need -10)")
    cr = check_constraints(prop.policy, channel, params)
    print(f"constraints satisfied: {cr.feasible} (worst normalized residual {cr.worst():.2e})")
    print(f"KKT residual of the last subproblem: {kkt_residual(prop.policy, prop.duals, prop.inner_q, channel, params):.2e}")
    active = np.count_nonzero(prop.policy.power[:, k])
    print(f"subcarriers carrying power: {active} of {params.num_subcarriers}")


if __name__ == "__main__":
    main()
