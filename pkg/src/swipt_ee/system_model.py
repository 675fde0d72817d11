"""Scenario parameters, unit conversions and random channel realizations.

Channels are abstracted to per-subcarrier power gains: Rayleigh fading
``|H|^2`` (unit-mean exponential), a distance-dependent path loss and an
optional log-normal shadowing term.  Everything downstream works with the
channel-to-noise ratio matrix and the power transfer efficiency matrix
stored on :class:`ChannelRealization`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

__all__ = [
    "SPEED_OF_LIGHT",
    "SystemParams",
    "ChannelRealization",
    "ConfigError",
    "dbm_to_watt",
    "watt_to_dbm",
    "db_to_linear",
    "linear_to_db",
    "path_loss",
    "path_loss_db",
    "sample_realization",
    "realization_rng",
    "default_params",
    "load_config",
    "parse_config",
    "format_config",
]

SPEED_OF_LIGHT = 299_792_458.0


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def dbm_to_watt(x):
    """Convert power from dBm to Watt."""
    return _scalar_or_array(10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0))


def watt_to_dbm(p):
    """Convert power from Watt to dBm."""
    return _scalar_or_array(10.0 * np.log10(np.asarray(p, dtype=float)) + 30.0)


def db_to_linear(x):
    return _scalar_or_array(10.0 ** (np.asarray(x, dtype=float) / 10.0))


def linear_to_db(x):
    return _scalar_or_array(10.0 * np.log10(np.asarray(x, dtype=float)))


def _as_user_vector(value, num_users: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(num_users, float(arr))
    arr = arr.reshape(-1)
    if arr.size == 1 and num_users > 1:
        arr = np.full(num_users, arr[0])
    if arr.size != num_users:
        raise ValueError(f"{name}: expected {num_users} entries, got {arr.size}")
    return arr


@dataclass(frozen=True)
class SystemParams:
    """Static scenario constants, all in linear SI units.

    Per-user quantities (``min_harvest``, ``harvest_efficiency``,
    ``weights``) accept a scalar, which is broadcast to ``num_users``.
    """

    num_users: int
    num_subcarriers: int
    total_bandwidth: float  # Hz
    noise_variance: float  # W
    circuit_power: float  # W
    max_tx_power: float  # W
    grid_power: float  # W
    min_rate: float  # bit/s
    min_harvest: np.ndarray  # W, per user
    harvest_efficiency: np.ndarray  # per user
    amplifier_inefficiency: float
    weights: np.ndarray
    ref_distance: float = 2.0  # m
    max_distance: float = 10.0  # m
    antenna_gain_db: float = 14.0
    carrier_frequency: float = 470e6  # Hz
    path_loss_exponent: float = 3.5
    shadowing_std_db: float = 0.0

    def __post_init__(self):
        K = int(self.num_users)
        object.__setattr__(self, "num_users", K)
        object.__setattr__(self, "num_subcarriers", int(self.num_subcarriers))
        for name in ("min_harvest", "harvest_efficiency", "weights"):
            object.__setattr__(self, name, _as_user_vector(getattr(self, name), K, name))
        self.validate()

    def validate(self) -> None:
        errors = []
        if self.num_users < 1:
            errors.append("num_users must be >= 1")
        if self.num_subcarriers < 1:
            errors.append("num_subcarriers must be >= 1")
        if self.amplifier_inefficiency < 1:
            errors.append("amplifier_inefficiency must be >= 1")
        if np.any(self.harvest_efficiency < 0) or np.any(self.harvest_efficiency > 1):
            errors.append("harvest_efficiency must lie in [0, 1]")
        if np.any(self.weights < 0):
            errors.append("weights must be >= 0")
        for name in ("total_bandwidth", "noise_variance", "circuit_power", "max_tx_power", "grid_power"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be > 0")
        if self.min_rate < 0 or np.any(self.min_harvest < 0):
            errors.append("min_rate and min_harvest must be >= 0")
        if not self.grid_power > self.circuit_power:
            errors.append("grid_power must exceed circuit_power")
        if not (self.max_distance >= self.ref_distance > 0):
            errors.append("need max_distance >= ref_distance > 0")
        if self.shadowing_std_db < 0:
            errors.append("shadowing_std_db must be >= 0")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def subcarrier_bandwidth(self) -> float:
        return self.total_bandwidth / self.num_subcarriers

    @property
    def power_budget(self) -> float:
        """Largest radiated power allowed by both the transmit limit and the grid supply."""
        return min(self.max_tx_power, (self.grid_power - self.circuit_power) / self.amplifier_inefficiency)

    def with_(self, **changes) -> "SystemParams":
        """Copy with some fields replaced; per-user vectors are re-broadcast when K changes."""
        if "num_users" in changes:
            K = int(changes["num_users"])
            for name in ("min_harvest", "harvest_efficiency", "weights"):
                if name not in changes:
                    vec = getattr(self, name)
                    if np.all(vec == vec[0]):
                        changes[name] = float(vec[0])
                    else:
                        raise ValueError(f"cannot resize non-uniform {name} to K={K}")
        return replace(self, **changes)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        out["subcarrier_bandwidth"] = self.subcarrier_bandwidth
        return out


def default_params(num_users: int = 4, max_tx_power_dbm: float = 30.0, **overrides) -> SystemParams:
    """Indoor 470 MHz scenario: 5 MHz over 128 subcarriers, 40 dBm circuit power,
    50 dBm grid supply, 10 Mbit/s minimum rate, -10 dBm harvesting requirement."""
    kw = dict(
        num_users=num_users,
        num_subcarriers=128,
        total_bandwidth=5e6,
        noise_variance=dbm_to_watt(-118.0),
        circuit_power=dbm_to_watt(40.0),
        max_tx_power=dbm_to_watt(max_tx_power_dbm),
        grid_power=dbm_to_watt(50.0),
        min_rate=10e6,
        min_harvest=dbm_to_watt(-10.0),
        harvest_efficiency=0.8,
        amplifier_inefficiency=2.5,
        weights=1.0,
        ref_distance=2.0,
        max_distance=10.0,
        antenna_gain_db=14.0,
        carrier_frequency=470e6,
        path_loss_exponent=3.5,
    )
    kw.update(overrides)
    return SystemParams(**kw)


def path_loss_db(d, params: SystemParams):
    """Link loss in dB (positive number): free space up to the reference
    distance, power-law decay beyond it, minus the link antenna gain."""
    d = np.asarray(d, dtype=float)
    if np.any(d < params.ref_distance * (1 - 1e-12)):
        raise ValueError(f"distance below reference distance {params.ref_distance} m")
    wavelength = SPEED_OF_LIGHT / params.carrier_frequency
    fspl_ref = 20.0 * np.log10(4.0 * np.pi * params.ref_distance / wavelength)
    loss = fspl_ref + 10.0 * params.path_loss_exponent * np.log10(d / params.ref_distance)
    return _scalar_or_array(loss - params.antenna_gain_db)


def path_loss(d, params: SystemParams):
    """Linear path-loss gain ``l`` at distance ``d`` (metres)."""
    return db_to_linear(-np.asarray(path_loss_db(d, params)))


@dataclass(frozen=True)
class ChannelRealization:
    """One scheduling slot worth of channel state.

    Matrices are ``(num_subcarriers, num_users)``.
    """

    fading_power: np.ndarray
    path_loss: np.ndarray
    shadowing: np.ndarray
    distances: np.ndarray
    cnr: np.ndarray
    transfer_eff: np.ndarray
    seed: int = 0
    index: int = 0

    @classmethod
    def from_gains(cls, fading_power, path_loss, params: SystemParams, shadowing=None,
                   distances=None, seed: int = 0, index: int = 0) -> "ChannelRealization":
        """Build a realization from explicit gains (handy for hand-made test channels)."""
        H2 = np.atleast_2d(np.asarray(fading_power, dtype=float))
        K = H2.shape[1]
        l = np.broadcast_to(np.asarray(path_loss, dtype=float), (K,)).copy()
        g = np.ones(K) if shadowing is None else np.broadcast_to(np.asarray(shadowing, dtype=float), (K,)).copy()
        d = np.full(K, np.nan) if distances is None else np.asarray(distances, dtype=float)
        gain = H2 * (l * g)
        cnr = gain / params.noise_variance
        eff = gain * params.harvest_efficiency
        return cls(H2, l, g, d, cnr, eff, seed, index)

    @property
    def num_subcarriers(self) -> int:
        return self.cnr.shape[0]

    @property
    def num_users(self) -> int:
        return self.cnr.shape[1]

    @property
    def idle_transfer(self) -> np.ndarray:
        """``E[i, k]``: transfer efficiency summed over every user except ``k``."""
        return self.transfer_eff.sum(axis=1, keepdims=True) - self.transfer_eff


def realization_rng(seed: int, index: int, user: int) -> np.random.Generator:
    """Independent stream per (seed, realization index, user).

    Keying by user means the K-user realization is a prefix of the
    (K+1)-user one, so sweeps over K share common random numbers.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index), int(user))))


def sample_realization(params: SystemParams, seed: int, index: int = 0) -> ChannelRealization:
    """Draw user positions, Rayleigh fading and shadowing for one slot."""
    K, n = params.num_users, params.num_subcarriers
    H2 = np.empty((n, K))
    d = np.empty(K)
    g = np.ones(K)
    for k in range(K):
        rng = realization_rng(seed, index, k)
        d[k] = rng.uniform(params.ref_distance, params.max_distance)
        H2[:, k] = rng.standard_exponential(n)
        shadow_db = rng.standard_normal()
        if params.shadowing_std_db > 0:
            g[k] = db_to_linear(params.shadowing_std_db * shadow_db)
    l = np.asarray(path_loss(d, params))
    return ChannelRealization.from_gains(H2, l, params, shadowing=g, distances=d, seed=seed, index=index)


# --------------------------------------------------------------------------
# key-value scenario files

class ConfigError(ValueError):
    """Malformed scenario file; carries the offending key and line number."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{': '.join([', '.join(where)] if where else [])}{': ' if where else ''}{message}")
        self.key = key
        self.line = line
        self.path = path


# unit -> (kind, converter to SI)
_UNITS = {
    "w": ("power", lambda v: v),
    "mw": ("power", lambda v: v * 1e-3),
    "dbm": ("power", lambda v: dbm_to_watt(v)),
    "dbw": ("power", lambda v: 10.0 ** (v / 10.0)),
    "hz": ("frequency", lambda v: v),
    "khz": ("frequency", lambda v: v * 1e3),
    "mhz": ("frequency", lambda v: v * 1e6),
    "ghz": ("frequency", lambda v: v * 1e9),
    "bps": ("rate", lambda v: v),
    "bit/s": ("rate", lambda v: v),
    "kbps": ("rate", lambda v: v * 1e3),
    "mbps": ("rate", lambda v: v * 1e6),
    "m": ("length", lambda v: v),
    "db": ("db", lambda v: v),
}

# key -> (expected unit kind or None for dimensionless, is per-user vector)
_KEYS = {
    "num_users": (None, False),
    "num_subcarriers": (None, False),
    "total_bandwidth": ("frequency", False),
    "noise_variance": ("power", False),
    "circuit_power": ("power", False),
    "max_tx_power": ("power", False),
    "grid_power": ("power", False),
    "min_rate": ("rate", False),
    "min_harvest": ("power", True),
    "harvest_efficiency": (None, True),
    "amplifier_inefficiency": (None, False),
    "weights": (None, True),
    "ref_distance": ("length", False),
    "max_distance": ("length", False),
    "antenna_gain_db": ("db", False),
    "carrier_frequency": ("frequency", False),
    "path_loss_exponent": (None, False),
    "shadowing_std_db": ("db", False),
}

_LINE_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*[=:]\s*(.*?)\s*$")


def _is_number(tok: str) -> bool:
    try:
        float(tok.rstrip(","))
    except ValueError:
        return False
    return True


def _parse_value(raw: str, key: str, lineno: int, path):
    kind, is_vector = _KEYS[key]
    parts = raw.split()
    unit = None
    if len(parts) >= 2 and parts[-1].lower() in _UNITS:
        unit = parts[-1].lower()
        raw = " ".join(parts[:-1])
    elif len(parts) >= 2 and not _is_number(parts[-1]):
        raise ConfigError(f"unknown unit '{parts[-1]}'", key, lineno, path)
    if kind in ("power",) and unit is None:
        raise ConfigError("power values need an explicit unit (W, mW, dBm or dBW)", key, lineno, path)
    if unit is not None:
        unit_kind, conv = _UNITS[unit]
        if kind is None or unit_kind != kind:
            raise ConfigError(f"unit '{unit}' does not apply here", key, lineno, path)
    else:
        conv = lambda v: v  # noqa: E731
    try:
        values = [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"cannot parse number from '{raw}'", key, lineno, path) from None
    if not values:
        raise ConfigError("missing value", key, lineno, path)
    if len(values) > 1 and not is_vector:
        raise ConfigError("expected a single value", key, lineno, path)
    values = [conv(v) for v in values]
    if key in ("num_users", "num_subcarriers"):
        if values[0] != int(values[0]):
            raise ConfigError("expected an integer", key, lineno, path)
        return int(values[0])
    return values if is_vector and len(values) > 1 else values[0]


def parse_config(text: str, path=None, base: SystemParams | None = None) -> SystemParams:
    """Parse a ``key = value [unit]`` scenario description.

    Blank lines and ``#`` comments are ignored.  Missing keys fall back to
    ``base`` (or :func:`default_params`).
    """
    values: dict = {}
    seen: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        m = _LINE_RE.match(stripped)
        if not m:
            raise ConfigError(f"expected 'key = value', got '{stripped}'", None, lineno, path)
        key, raw = m.group(1), m.group(2)
        if key not in _KEYS:
            raise ConfigError("unknown key", key, lineno, path)
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key]})", key, lineno, path)
        seen[key] = lineno
        values[key] = _parse_value(raw, key, lineno, path)
    if base is None:
        base = default_params(num_users=values.get("num_users", 4))
    try:
        return base.with_(**values) if values else base
    except ValueError as exc:
        bad = next((k for k in values if k in str(exc)), None)
        raise ConfigError(str(exc), bad, seen.get(bad), path) from None


def load_config(path) -> SystemParams:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file ({exc.strerror})", path=path) from None
    return parse_config(text, path=path)


def format_config(params: SystemParams) -> str:
    """Render parameters in the same key-value format (linear units)."""
    unit = {"power": "W", "frequency": "Hz", "rate": "bps", "length": "m", "db": "dB"}
    lines = []
    for key, (kind, is_vector) in _KEYS.items():
        v = getattr(params, key)
        if isinstance(v, np.ndarray):
            txt = ", ".join(repr(float(x)) for x in v)
        else:
            txt = repr(v)
        suffix = f" {unit[kind]}" if kind else ""
        lines.append(f"{key} = {txt}{suffix}")
    return "\n".join(lines) + "\n"
