"""Objective terms and constraint evaluation for a candidate allocation.

All functions accept relaxed (time-sharing) selections ``0 <= s_k <= 1``;
the radiated power on subcarrier ``i`` for user ``k`` is then
``P[i, k] * s[k]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .system_model import ChannelRealization, SystemParams

__all__ = [
    "ModelViolationError",
    "AllocationPolicy",
    "ConstraintReport",
    "link_rates",
    "capacity",
    "sum_rate",
    "radiated_power",
    "harvested_power",
    "harvest_per_user",
    "total_power",
    "energy_efficiency",
    "check_constraints",
]


class ModelViolationError(ArithmeticError):
    """Total power dissipation is not positive, so the ratio is meaningless."""


@dataclass
class AllocationPolicy:
    """Power matrix ``(n_F, K)`` in Watt plus per-user selection weights."""

    power: np.ndarray
    selection: np.ndarray

    def __post_init__(self):
        self.power = np.atleast_2d(np.asarray(self.power, dtype=float))
        self.selection = np.asarray(self.selection, dtype=float).reshape(-1)
        if self.power.shape[1] != self.selection.size:
            raise ValueError(f"power has {self.power.shape[1]} user columns, selection has {self.selection.size}")

    @classmethod
    def single_user(cls, k: int, column, num_users: int) -> "AllocationPolicy":
        column = np.asarray(column, dtype=float)
        P = np.zeros((column.size, num_users))
        P[:, k] = column
        s = np.zeros(num_users)
        s[k] = 1.0
        return cls(P, s)

    @classmethod
    def zeros(cls, num_subcarriers: int, num_users: int) -> "AllocationPolicy":
        return cls(np.zeros((num_subcarriers, num_users)), np.zeros(num_users))

    @property
    def effective_power(self) -> np.ndarray:
        """Radiated power per (subcarrier, user): ``P * s``."""
        return self.power * self.selection

    @property
    def is_integral(self) -> bool:
        return bool(np.all((self.selection == 0) | (self.selection == 1)))

    @property
    def selected_user(self) -> int | None:
        idx = np.flatnonzero(self.selection == 1)
        return int(idx[0]) if idx.size == 1 and self.selection.sum() == 1 else None


def _check_shapes(policy: AllocationPolicy, realization: ChannelRealization) -> None:
    if policy.power.shape != realization.cnr.shape:
        raise ValueError(f"policy shape {policy.power.shape} does not match channel {realization.cnr.shape}")


def link_rates(policy: AllocationPolicy, realization: ChannelRealization, params: SystemParams) -> np.ndarray:
    """Per (subcarrier, user) Shannon rate ``W log2(1 + P Gamma)`` in bit/s."""
    _check_shapes(policy, realization)
    return params.subcarrier_bandwidth * np.log2(1.0 + np.maximum(policy.power, 0.0) * realization.cnr)


def capacity(policy: AllocationPolicy, realization: ChannelRealization, params: SystemParams,
             weighted: bool = True) -> float:
    """System capacity ``sum_i sum_k w_k s_k C_ik``.

    With ``weighted=False`` the user weights are dropped, which is the rate
    the minimum-rate constraint is checked against.
    """
    rates = link_rates(policy, realization, params).sum(axis=0)
    coef = policy.selection * (params.weights if weighted else 1.0)
    return float(np.dot(coef, rates))


def sum_rate(policy: AllocationPolicy, realization: ChannelRealization, params: SystemParams) -> float:
    return capacity(policy, realization, params, weighted=False)


def radiated_power(policy: AllocationPolicy) -> float:
    return float(policy.effective_power.sum())


def harvested_power(policy: AllocationPolicy, realization: ChannelRealization) -> float:
    """Power collected by the idle users: ``sum_ik P s sum_{j!=k} e_ij``."""
    _check_shapes(policy, realization)
    return float(np.sum(policy.effective_power * realization.idle_transfer))


def harvest_per_user(policy: AllocationPolicy, realization: ChannelRealization) -> np.ndarray:
    """Power reaching each user ``k`` from the whole transmission, ``sum_i sum_j P_ij s_j e_ik``."""
    _check_shapes(policy, realization)
    per_subcarrier = policy.effective_power.sum(axis=1)
    return per_subcarrier @ realization.transfer_eff


def total_power(policy: AllocationPolicy, realization: ChannelRealization, params: SystemParams) -> float:
    """Power dissipation ``P_C + eps * sum P s - P_H`` in Watt."""
    return (params.circuit_power + params.amplifier_inefficiency * radiated_power(policy)
            - harvested_power(policy, realization))


def energy_efficiency(policy: AllocationPolicy, realization: ChannelRealization, params: SystemParams) -> float:
    """Delivered bits per Joule."""
    denom = total_power(policy, realization, params)
    if not denom > 0:
        raise ModelViolationError(f"non-positive power dissipation {denom!r} W; "
                                  "harvested power exceeds amplifier consumption")
    return capacity(policy, realization, params) / denom


@dataclass
class ConstraintReport:
    """Signed residuals (>= 0 means satisfied) and their normalized values."""

    c1: np.ndarray  # W, per user
    c2: float  # W
    c3: float  # W
    c4: float  # bit/s
    c5: float
    c6_violated: bool
    c7_violated: bool
    normalized: dict = field(default_factory=dict)
    tol: float = 1e-6
    structural_tol: float = 1e-6
    feasible: bool = False

    def worst(self) -> float:
        """Most negative normalized residual over C1-C5 (0 if all satisfied)."""
        vals = [np.min(self.normalized["c1"]) if np.size(self.normalized["c1"]) else 0.0]
        vals += [self.normalized[k] for k in ("c2", "c3", "c4", "c5")]
        return float(min(0.0, *vals))

    def to_record(self) -> dict:
        rec = {}
        for k, v in enumerate(np.atleast_1d(self.c1)):
            rec[f"c1_user{k}"] = float(v)
        rec.update(c2=float(self.c2), c3=float(self.c3), c4=float(self.c4), c5=float(self.c5),
                   c6_violated=bool(self.c6_violated), c7_violated=bool(self.c7_violated),
                   tol=self.tol, structural_tol=self.structural_tol, feasible=bool(self.feasible))
        return rec


def check_constraints(policy: AllocationPolicy, realization: ChannelRealization, params: SystemParams,
                      tol: float = 1e-6, structural_tol: float | None = None) -> ConstraintReport:
    """Evaluate C1-C7.

    Residuals of C1-C4 are divided by the scale of their right-hand side
    (``P_min_k``, ``P_max``, ``P_PG``, ``R_min``) and compared against
    ``-tol``; C5-C7 use ``structural_tol`` (defaults to ``tol``).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    stol = tol if structural_tol is None else structural_tol
    s = policy.selection
    radiated = radiated_power(policy)

    c1 = harvest_per_user(policy, realization) - (1.0 - s) * params.min_harvest
    c2 = params.max_tx_power - radiated
    c3 = params.grid_power - (params.amplifier_inefficiency * radiated + params.circuit_power)
    c4 = sum_rate(policy, realization, params) - params.min_rate
    c5 = 1.0 - s.sum()

    c1_scale = np.where(params.min_harvest > 0, params.min_harvest, 1.0)
    norm = {
        "c1": c1 / c1_scale,
        "c2": c2 / params.max_tx_power,
        "c3": c3 / params.grid_power,
        "c4": c4 / (params.min_rate if params.min_rate > 0 else 1.0),
        "c5": c5,
    }
    c6_bad = bool(np.any(np.minimum(np.abs(s), np.abs(1.0 - s)) > stol))
    c7_bad = bool(np.any(policy.power < -stol * params.max_tx_power))
    ok = (np.all(norm["c1"] >= -tol) and norm["c2"] >= -tol and norm["c3"] >= -tol
          and norm["c4"] >= -tol and norm["c5"] >= -stol and not c6_bad and not c7_bad)
    return ConstraintReport(c1, float(c2), float(c3), float(c4), float(c5), c6_bad, c7_bad,
                            norm, tol, stol, bool(ok))
