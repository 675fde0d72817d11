"""Energy-efficient power allocation and user selection for OFDM downlinks
with simultaneous wireless information and power transfer."""

from .system_model import (
    ChannelRealization, ConfigError, SystemParams, dbm_to_watt, default_params, load_config,
    path_loss, sample_realization, watt_to_dbm,
)
from .metrics import (
    AllocationPolicy, ConstraintReport, capacity, check_constraints, energy_efficiency,
    harvested_power, total_power,
)
from .dual_solver import (
    DualState, InfeasibleError, InnerSolution, SolverOptions, check_feasibility, solve_inner,
)
from .dinkelbach import SolveReport, baseline_capacity_max, f_value, maximize_ee
from .oracle import OracleSolution, grid_oracle, kkt_residual
from .experiments import ExperimentSpec, SweepResult, emit_csv, read_csv, run_convergence, sweep_pmax

__version__ = "0.1.0"
