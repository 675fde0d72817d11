"""Monte Carlo studies: convergence versus iteration budget and the
transmit-power sweep comparing the energy-efficient scheme against the
capacity-maximizing baseline.

Realization ``r`` of a ``K``-user scenario is drawn from ``(seed, r)``
alone, so every cell of a sweep reuses the same channels (common random
numbers) and both schemes always see identical inputs.  A realization
with no feasible allocation counts as zero energy efficiency, zero
capacity and zero harvested power.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dinkelbach import SolveReport, baseline_capacity_max, maximize_ee
from .dual_solver import SolverOptions, check_feasibility
from .system_model import SystemParams, dbm_to_watt, default_params, sample_realization

__all__ = [
    "ExperimentSpec",
    "CellStats",
    "SweepResult",
    "ConvergenceRow",
    "DEFAULT_PMAX_DBM",
    "DEFAULT_USERS",
    "DEFAULT_BUDGETS",
    "DEFAULT_CONVERGENCE_CONFIGS",
    "SWEEP_COLUMNS",
    "CONVERGENCE_COLUMNS",
    "run_convergence",
    "sweep_pmax",
    "emit_csv",
    "read_csv",
    "emit_convergence_csv",
]

DEFAULT_PMAX_DBM = tuple(float(x) for x in range(10, 47, 4))
DEFAULT_USERS = (1, 2, 4, 8)
DEFAULT_BUDGETS = (1, 2, 3, 5, 10, 20, 30, 50, 100, 200)
DEFAULT_CONVERGENCE_CONFIGS = ((1, 20.0), (4, 20.0), (4, 40.0))

SWEEP_COLUMNS = ("config_id", "pmax_dbm", "K", "scheme", "mean_ee_bit_per_joule", "se_ee",
                 "mean_capacity_bps", "se_capacity", "mean_harvested_w", "se_harvested",
                 "failure_rate", "n_realizations")
CONVERGENCE_COLUMNS = ("config_id", "K", "pmax_dbm", "budget", "mean_ee_bit_per_joule", "se_ee",
                       "failure_rate", "n_realizations")

_INT_COLUMNS = {"K", "n_realizations", "budget"}
_STR_COLUMNS = {"config_id", "scheme"}


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run.

    ``budget_mode="fixed"`` caps every solve at ``budget`` total
    iterations (outer loops times inner passes); ``"tolerance"`` runs the
    solvers to their convergence tests.
    """

    base: SystemParams = field(default_factory=default_params)
    pmax_dbm: tuple = DEFAULT_PMAX_DBM
    users: tuple = DEFAULT_USERS
    realizations: int = 1000
    seed: int = 0
    budget_mode: str = "tolerance"
    budget: int = 30
    budgets: tuple = DEFAULT_BUDGETS
    convergence_configs: tuple = DEFAULT_CONVERGENCE_CONFIGS
    workers: int = 1
    out_dir: str | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.pmax_dbm or not self.users:
            raise ValueError("sweep lists must be non-empty")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if self.budget_mode not in ("tolerance", "fixed"):
            raise ValueError(f"unknown budget mode {self.budget_mode!r}")
        if self.budget < 1 or any(b < 1 for b in self.budgets):
            raise ValueError("iteration budgets must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def iteration_budget(self) -> int | None:
        return self.budget if self.budget_mode == "fixed" else None

    def params_for(self, num_users: int, pmax_dbm: float) -> SystemParams:
        return self.base.with_(num_users=int(num_users), max_tx_power=dbm_to_watt(pmax_dbm))


@dataclass(frozen=True)
class CellStats:
    config_id: str
    pmax_dbm: float
    K: int
    scheme: str
    mean_ee_bit_per_joule: float
    se_ee: float
    mean_capacity_bps: float
    se_capacity: float
    mean_harvested_w: float
    se_harvested: float
    failure_rate: float
    n_realizations: int

    def row(self) -> dict:
        return {c: getattr(self, c) for c in SWEEP_COLUMNS}


@dataclass
class SweepResult:
    """Aggregates per (P_max, K, scheme) plus the per-realization values.

    ``samples[(pmax_dbm, K)]`` maps ``"proposed_ee"``, ``"baseline_ee"``,
    ``"proposed_capacity"`` ... to arrays indexed by realization.
    """

    cells: list
    samples: dict = field(default_factory=dict)

    @property
    def unconverged(self) -> int:
        """Feasible solves that stopped on an iteration limit."""
        return int(sum(v["proposed_unconverged"].sum() + v["baseline_unconverged"].sum()
                       for v in self.samples.values()))

    def cell(self, pmax_dbm: float, K: int, scheme: str) -> CellStats:
        for c in self.cells:
            if c.pmax_dbm == pmax_dbm and c.K == K and c.scheme == scheme:
                return c
        raise KeyError((pmax_dbm, K, scheme))

    def series(self, metric: str, K: int, scheme: str):
        """``(pmax values, means, standard errors)`` for one curve."""
        se_name = {"mean_ee_bit_per_joule": "se_ee", "mean_capacity_bps": "se_capacity",
                   "mean_harvested_w": "se_harvested"}[metric]
        rows = sorted((c for c in self.cells if c.K == K and c.scheme == scheme), key=lambda c: c.pmax_dbm)
        return (np.array([c.pmax_dbm for c in rows]), np.array([getattr(c, metric) for c in rows]),
                np.array([getattr(c, se_name) for c in rows]))


@dataclass(frozen=True)
class ConvergenceRow:
    config_id: str
    K: int
    pmax_dbm: float
    budget: int
    mean_ee_bit_per_joule: float
    se_ee: float
    failure_rate: float
    n_realizations: int

    def row(self) -> dict:
        return {c: getattr(self, c) for c in CONVERGENCE_COLUMNS}


def _config_id(pmax_dbm: float, K: int) -> str:
    return f"pmax{pmax_dbm:g}dBm_K{K}"


def _mean_se(x: np.ndarray) -> tuple:
    x = np.asarray(x, float)
    if x.size == 0:
        return 0.0, 0.0
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), se


def _values(rep: SolveReport) -> tuple:
    """ee, capacity, harvested power, failed, unconverged."""
    if not rep.feasible:
        return 0.0, 0.0, 0.0, True, False
    return rep.energy_efficiency, rep.capacity, rep.harvested_power, False, not rep.converged


# ---------------------------------------------------------------------------
# workers: module-level so they pickle

def _sweep_task(task) -> np.ndarray:
    """All P_max points of one (K, realization) pair.

    Returns ``(n_pmax, 10)``: ee, capacity, harvest, failed, unconverged
    for the proposed scheme, then the same for the baseline.
    """
    spec, K, index = task
    out = np.zeros((len(spec.pmax_dbm), 10))
    channel = None
    for j, pm in enumerate(spec.pmax_dbm):
        params = spec.params_for(K, pm)
        if channel is None:
            # the channel does not depend on the power limits
            channel = sample_realization(params, spec.seed, index)
        fr = check_feasibility(channel, params, spec.solver)
        prop = maximize_ee(channel, params, spec.solver, spec.iteration_budget, feasibility=fr)
        base = baseline_capacity_max(channel, params, spec.solver, spec.iteration_budget, feasibility=fr)
        out[j, :5] = _values(prop)
        out[j, 5:] = _values(base)
    return out


def _convergence_task(task) -> np.ndarray:
    spec, K, pmax_dbm, index = task
    params = spec.params_for(K, pmax_dbm)
    channel = sample_realization(params, spec.seed, index)
    fr = check_feasibility(channel, params, spec.solver)
    out = np.zeros(len(spec.budgets))
    for j, b in enumerate(spec.budgets):
        out[j] = _values(maximize_ee(channel, params, spec.solver, iteration_budget=b, feasibility=fr))[0]
    return out


def _run(fn, tasks, workers: int) -> list:
    """Results in task order whatever the worker count."""
    if workers == 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def sweep_pmax(spec: ExperimentSpec) -> SweepResult:
    """Average EE, capacity and harvested power over the P_max x K grid for
    both schemes."""
    tasks = [(spec, K, r) for K in spec.users for r in range(spec.realizations)]
    results = _run(_sweep_task, tasks, spec.workers)
    cells, samples = [], {}
    n = spec.realizations
    for a, K in enumerate(spec.users):
        block = np.stack(results[a * n:(a + 1) * n])  # (n, n_pmax, 10)
        for j, pm in enumerate(spec.pmax_dbm):
            data = block[:, j, :]
            samples[(pm, K)] = {
                "proposed_ee": data[:, 0], "proposed_capacity": data[:, 1], "proposed_harvested": data[:, 2],
                "baseline_ee": data[:, 5], "baseline_capacity": data[:, 6], "baseline_harvested": data[:, 7],
                "failed": data[:, 3].astype(bool),
                "proposed_unconverged": data[:, 4].astype(bool), "baseline_unconverged": data[:, 9].astype(bool),
            }
            for off, scheme in ((0, "proposed"), (5, "baseline")):
                ee, se_ee = _mean_se(data[:, off])
                cap, se_cap = _mean_se(data[:, off + 1])
                harv, se_harv = _mean_se(data[:, off + 2])
                cells.append(CellStats(_config_id(pm, K), float(pm), int(K), scheme, ee, se_ee, cap, se_cap,
                                       harv, se_harv, float(data[:, off + 3].mean()), n))
    return SweepResult(cells, samples)


def run_convergence(spec: ExperimentSpec) -> list:
    """Mean EE of the policy returned under each total-iteration budget,
    for every ``(K, P_max)`` in ``spec.convergence_configs``."""
    rows = []
    n = spec.realizations
    for K, pm in spec.convergence_configs:
        tasks = [(spec, int(K), float(pm), r) for r in range(n)]
        block = np.stack(_run(_convergence_task, tasks, spec.workers))  # (n, n_budgets)
        failed = float(np.mean(block[:, -1] == 0.0))
        for j, b in enumerate(spec.budgets):
            mean, se = _mean_se(block[:, j])
            rows.append(ConvergenceRow(_config_id(pm, K), int(K), float(pm), int(b), mean, se, failed, n))
    return rows


# ---------------------------------------------------------------------------
# CSV

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17e")


def _write(rows, columns, path) -> Path:
    path = Path(path)
    try:
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def emit_csv(result: SweepResult, path) -> Path:
    """One header row plus one row per (P_max, K, scheme) cell."""
    return _write([c.row() for c in result.cells], SWEEP_COLUMNS, path)


def emit_convergence_csv(rows, path) -> Path:
    return _write([r.row() for r in rows], CONVERGENCE_COLUMNS, path)


def read_csv(path) -> list:
    """Rows of a file written by :func:`emit_csv` or
    :func:`emit_convergence_csv`, with numeric columns converted back."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    out = []
    for r in rows:
        out.append({k: v if k in _STR_COLUMNS else int(v) if k in _INT_COLUMNS else float(v)
                    for k, v in r.items()})
    return out
