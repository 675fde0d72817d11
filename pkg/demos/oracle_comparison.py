"""Compare the solver with exhaustive grid search on toy instances.

The toy scenario keeps the subcarrier width of the full system but uses
two users and two subcarriers, so every power vector on a fine grid can
be enumerated.  Halving the grid gives an estimate of the grid error.

    python demos/oracle_comparison.py --instances 10
"""

import argparse

from swipt_ee import default_params, grid_oracle, maximize_ee, sample_realization
from swipt_ee.oracle import richardson_gap


def toy_params(num_users=2, num_subcarriers=2):
    base = default_params(num_users, 24.0)
    return base.with_(num_subcarriers=num_subcarriers,
                      total_bandwidth=base.subcarrier_bandwidth * num_subcarriers,
                      min_rate=base.min_rate * num_subcarriers / 128, max_distance=5.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--levels", type=int, default=400)
    args = ap.parse_args()

    params = toy_params()
    print(f"{'idx':>3} {'solver EE':>13} {'oracle EE':>13} {'deviation':>10} {'grid gap':>10}")
    for i in range(args.instances):
        channel = sample_realization(params, args.seed, i)
        rep = maximize_ee(channel, params)
        fine = grid_oracle(channel, params, args.levels)
        coarse = grid_oracle(channel, params, args.levels // 2)
        dev = abs(rep.energy_efficiency - fine.energy_efficiency) / max(fine.energy_efficiency, 1.0)
        print(f"{i:>3} {rep.energy_efficiency:>13.6e} {fine.energy_efficiency:>13.6e} "
              f"{dev:>10.2e} {richardson_gap(fine, coarse):>10.2e}")


if __name__ == "__main__":
    main()
