"""Command-line front end.

Subcommands::

    solve         one channel realization, both schemes; optional trace CSV
    sweep         P_max x K Monte Carlo sweep, CSV of cell averages
    convergence   mean EE versus total-iteration budget, CSV
    oracle-check  solver against exhaustive grid search on toy instances

Exit codes: 0 success, 1 infeasible realization (solve), 2 bad
configuration, arguments or I/O, 3 a solve stopped on an iteration limit,
4 oracle disagreement beyond the grid-gap bound.
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, experiments
from .dinkelbach import baseline_capacity_max, maximize_ee
from .dual_solver import SolverOptions, check_feasibility
from .oracle import grid_oracle, richardson_gap
from .system_model import ConfigError, format_config, load_config, sample_realization, watt_to_dbm

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_CONFIG = 2
EXIT_UNCONVERGED = 3
EXIT_ORACLE = 4

log = logging.getLogger("swipt_ee")


def packaged_config(name: str = "default.cfg") -> Path:
    return Path(str(resources.files("swipt_ee") / "data" / name))


def _banner(params, args, out=None) -> None:
    out = out or sys.stdout
    print(f"# swipt-ee {__version__} {args.command}  config={args.config}  seed={args.seed}", file=out)
    for line in format_config(params).splitlines():
        print(f"#   {line}", file=out)
    print(f"#   subcarrier_bandwidth = {params.subcarrier_bandwidth!r} Hz", file=out)
    print(f"#   power_budget = {params.power_budget!r} W", file=out)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> tuple:
    try:
        vals = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swipt-ee", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="scenario file (default: packaged scenario)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=None, help="output CSV path")
    common.add_argument("-v", "--verbose", action="count", default=0)

    s = sub.add_parser("solve", parents=[common], help="solve one realization")
    s.add_argument("--index", type=int, default=0, help="realization index under the seed")
    s.add_argument("--budget", type=_positive_int, default=None, help="total iteration budget")
    s.add_argument("--trace", type=Path, default=None, help="write the per-outer-iteration trace here")

    for name, helptext in (("sweep", "P_max x K sweep"), ("convergence", "EE versus iteration budget")):
        e = sub.add_parser(name, parents=[common], help=helptext)
        e.add_argument("--realizations", type=_positive_int, default=1000)
        e.add_argument("--workers", type=_positive_int, default=1)
        e.add_argument("--budget", type=_positive_int, default=None,
                       help="sweep: fixed total-iteration budget per solve; "
                            "convergence: largest budget tabulated")
        if name == "sweep":
            e.add_argument("--pmax-dbm", type=_float_list, default=experiments.DEFAULT_PMAX_DBM)
            e.add_argument("--users", type=_int_list, default=experiments.DEFAULT_USERS)
        else:
            e.add_argument("--budgets", type=_int_list, default=experiments.DEFAULT_BUDGETS)

    o = sub.add_parser("oracle-check", parents=[common], help="compare against exhaustive search")
    o.add_argument("--realizations", type=_positive_int, default=20)
    o.add_argument("--levels", type=int, default=None,
                   help="grid levels per subcarrier (default 400 for n_F <= 2, else 100)")
    return p


def _solve(args, params, opts) -> int:
    channel = sample_realization(params, args.seed, args.index)
    fr = check_feasibility(channel, params, opts)
    prop = maximize_ee(channel, params, opts, args.budget, feasibility=fr)
    base = baseline_capacity_max(channel, params, opts, args.budget, feasibility=fr)
    if prop.status == "budget":
        print(f"no feasible iterate within {args.budget} iterations")
        return EXIT_UNCONVERGED
    if not prop.feasible:
        print(f"realization {args.index} infeasible:")
        for reason in fr.reasons:
            print(f"  {reason}")
        return EXIT_INFEASIBLE
    print(f"{'scheme':<10}{'EE [bit/J]':>16}{'capacity [bit/s]':>18}{'P_TX [dBm]':>12}"
          f"{'P_H [W]':>12}{'user':>6}{'outer':>7}{'iters':>7}  status")
    for rep in (prop, base):
        rec = rep.to_record()
        ptx = watt_to_dbm(rec["radiated_power"]) if rec["radiated_power"] > 0 else float("-inf")
        print(f"{rep.scheme:<10}{rep.energy_efficiency:>16.6e}{rep.capacity:>18.6e}{ptx:>12.3f}"
              f"{rep.harvested_power:>12.4e}{rec['selected_user']:>6d}{rep.outer_iterations:>7d}"
              f"{rep.total_iterations:>7d}  {rep.status}")
    print(f"worst normalized constraint residual: {prop.constraints.worst():.3e}")
    trace_path = args.trace or args.out
    if trace_path is not None:
        prop.write_trace(trace_path)
        print(f"trace written to {trace_path}")
    return EXIT_OK if prop.converged and base.converged else EXIT_UNCONVERGED


def _sweep(args, params, opts) -> int:
    spec = experiments.ExperimentSpec(
        base=params, pmax_dbm=args.pmax_dbm, users=args.users, realizations=args.realizations,
        seed=args.seed, budget_mode="fixed" if args.budget else "tolerance",
        budget=args.budget or 30, workers=args.workers, solver=opts)
    res = experiments.sweep_pmax(spec)
    path = experiments.emit_csv(res, args.out or Path("sweep.csv"))
    print(f"{len(res.cells)} cells x {spec.realizations} realizations written to {path}")
    if spec.budget_mode == "tolerance" and res.unconverged:
        print(f"warning: {res.unconverged} solves stopped on an iteration limit", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def _convergence(args, params, opts) -> int:
    budgets = args.budgets
    if args.budget is not None:
        budgets = tuple(sorted({b for b in budgets if b <= args.budget} | {args.budget}))
    spec = experiments.ExperimentSpec(base=params, realizations=args.realizations, seed=args.seed,
                                      budgets=budgets, workers=args.workers, solver=opts)
    rows = experiments.run_convergence(spec)
    path = experiments.emit_convergence_csv(rows, args.out or Path("convergence.csv"))
    for r in rows:
        print(f"K={r.K} P_max={r.pmax_dbm:g} dBm budget={r.budget:>4d}  mean EE {r.mean_ee_bit_per_joule:.6e}")
    print(f"written to {path}")
    return EXIT_OK


def _oracle_check(args, params, opts) -> int:
    n = params.num_subcarriers
    fine = args.levels or (400 if n <= 2 else 100)
    coarse = max(fine // 2, 50)
    worst, worst_excess = 0.0, -np.inf
    for idx in range(args.realizations):
        channel = sample_realization(params, args.seed, idx)
        of = grid_oracle(channel, params, fine)
        oc = grid_oracle(channel, params, coarse)
        rep = maximize_ee(channel, params, opts)
        dev = abs(rep.energy_efficiency - of.energy_efficiency) / max(of.energy_efficiency, 1.0)
        bound = max(richardson_gap(of, oc), 1e-3)
        worst = max(worst, dev)
        worst_excess = max(worst_excess, dev - bound)
        log.info("instance %d: solver %.9e oracle %.9e deviation %.2e bound %.2e",
                 idx, rep.energy_efficiency, of.energy_efficiency, dev, bound)
    print(f"max relative deviation {worst:.3e} over {args.realizations} instances "
          f"(levels {fine}/{coarse}; bound max(grid gap, 1e-3))")
    return EXIT_OK if worst_excess <= 0 else EXIT_ORACLE


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if args.config is None:
        args.config = packaged_config("tiny.cfg" if args.command == "oracle-check" else "default.cfg")
    try:
        params = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    opts = SolverOptions()
    _banner(params, args)
    handler = {"solve": _solve, "sweep": _sweep, "convergence": _convergence, "oracle-check": _oracle_check}
    try:
        return handler[args.command](args, params, opts)
    except ValueError as exc:
        # size guards and parameter checks that only fire once the command runs
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
