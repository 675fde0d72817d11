"""Energy efficiency, capacity and harvested power against P_max.

Runs both schemes on the same channels for every (P_max, K) cell and
prints the averages side by side.  The proposed scheme stops spending
power once extra radiated power no longer pays for itself, so its
efficiency flattens while the baseline's falls.

    python demos/pmax_sweep.py --realizations 50 --users 1,4
"""

import argparse

from swipt_ee import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--realizations", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--users", default="1,2,4,8")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None, help="optional CSV path")
    args = ap.parse_args()

    users = tuple(int(u) for u in args.users.split(","))
    spec = experiments.ExperimentSpec(realizations=args.realizations, seed=args.seed, users=users,
                                      workers=args.workers)
    res = experiments.sweep_pmax(spec)
    for K in users:
        print(f"\nK={K} ({args.realizations} realizations; infeasible draws count as zero)")
        print(f"{'P_max':>6} | {'EE prop':>10} {'EE base':>10} | {'cap prop':>10} {'cap base':>10}"
              f" | {'P_H prop':>9} {'P_H base':>9} | {'fail':>5}")
        for pm in spec.pmax_dbm:
            p, b = res.cell(pm, K, "proposed"), res.cell(pm, K, "baseline")
            print(f"{pm:>6g} | {p.mean_ee_bit_per_joule:>10.3e} {b.mean_ee_bit_per_joule:>10.3e} | "
                  f"{p.mean_capacity_bps:>10.3e} {b.mean_capacity_bps:>10.3e} | "
                  f"{p.mean_harvested_w:>9.2e} {b.mean_harvested_w:>9.2e} | {p.failure_rate:>5.0%}")
    if args.out:
        print("\nwritten to", experiments.emit_csv(res, args.out))


if __name__ == "__main__":
    main()
