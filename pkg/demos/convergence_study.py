"""Mean energy efficiency against the total iteration budget.

Each realization is solved repeatedly with a cap on the Layer-1/Layer-2
passes summed over all outer loops; infeasible draws count as zero.  The
table shows how quickly the mean settles.

    python demos/convergence_study.py --realizations 200
"""

import argparse

from swipt_ee import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--realizations", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None, help="optional CSV path")
    args = ap.parse_args()

    spec = experiments.ExperimentSpec(realizations=args.realizations, seed=args.seed, workers=args.workers)
    rows = experiments.run_convergence(spec)
    for K, pm in spec.convergence_configs:
        sel = [r for r in rows if r.K == K and r.pmax_dbm == pm]
        final = sel[-1].mean_ee_bit_per_joule
        print(f"\nK={K}, P_max={pm:g} dBm, {args.realizations} realizations, "
              f"{sel[0].failure_rate:.1%} infeasible")
        print(f"{'budget':>7} {'mean EE [bit/J]':>16} {'SE':>10} {'of largest':>11}")
        for r in sel:
            frac = r.mean_ee_bit_per_joule / final if final > 0 else float("nan")
            print(f"{r.budget:>7} {r.mean_ee_bit_per_joule:>16.5e} {r.se_ee:>10.2e} {frac:>11.2%}")
    if args.out:
        print("\nwritten to", experiments.emit_convergence_csv(rows, args.out))


if __name__ == "__main__":
    main()
