"""System configuration and unit conversions.

All internal math runs in linear units: powers in watts, rates in
bits/s/Hz per subcarrier. dBm/dB only appear at the configuration
boundary (config files, CLI flags) and are converted here.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

LN2 = math.log(2.0)


def dbm_to_watts(x_dbm: float) -> float:
    """Convert a power level in dBm to watts: 10^((x - 30) / 10)."""
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watts_to_dbm(x_w: float) -> float:
    if x_w <= 0.0:
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * math.log10(x_w) + 30.0


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class SolverParams:
    """Tunables of the barrier subproblem solver.

    Overridable per-field from the environment (FDSEC_SOLVER_<FIELD>)
    or CLI flags; defaults follow the solver design notes.
    """

    mu: float = 10.0                 # barrier parameter multiplier per outer iteration
    tol_gap_rel: float = 1e-7        # exit when m/t <= tol_gap_rel * (1 + |f0|)
    tol_kkt: float = 1e-6            # Newton-decrement stationarity at exit
    newton_max: int = 50             # Newton steps per centering
    armijo_alpha: float = 0.01
    backtrack_beta: float = 0.5
    newton_tol: float = 1e-6         # centering tolerance on lambda^2/2 (intermediate t)
    newton_tol_final: float = 1e-10  # tolerance for the last centering
    max_outer: int = 64
    t0: float | str | None = None    # initial barrier weight; "auto" fits it to the start point
    t0_scale: float = 1.0            # back-off factor applied to the fitted t0
    trace_path: str | None = None    # optional per-iteration CSV log

    @staticmethod
    def from_env(base: "SolverParams | None" = None) -> "SolverParams":
        import os

        params = base or SolverParams()
        kwargs = {}
        for f in dataclasses.fields(SolverParams):
            raw = os.environ.get(f"FDSEC_SOLVER_{f.name.upper()}")
            if raw is None:
                continue
            if f.name == "trace_path":
                kwargs[f.name] = raw
            elif f.name in ("newton_max", "max_outer"):
                kwargs[f.name] = int(raw)
            else:
                kwargs[f.name] = float(raw)
        return dataclasses.replace(params, **kwargs) if kwargs else params


# Table-I style defaults at desk scale: the paper's 64 subcarriers and
# K = J = 4 users are runnable but slow; 8/2/2 keeps the benchmark suite
# laptop-sized. All physical constants match the published table.
@dataclass(frozen=True)
class SystemConfig:
    n_subcarriers: int = 8
    n_dl_users: int = 2
    n_ul_users: int = 2
    n_eve_antennas: int = 2          # idle users, treated as one multi-antenna eavesdropper
    n_tx_antennas: int = 4

    p_max_dl: float = dbm_to_watts(45.0)          # BS transmit power budget [W]
    p_max_ul: float = dbm_to_watts(18.0)          # per-UL-user budget [W]
    noise_dl: float = dbm_to_watts(-110.0)        # sigma_{n_k}^2 [W]
    noise_ul: float = dbm_to_watts(-110.0)        # sigma_UL^2 [W]
    noise_eve: float = dbm_to_watts(-110.0)       # sigma_E^2 [W]
    rho: float = db_to_linear(-100.0)             # residual SI factor

    r_tol_dl: float = 0.3            # max tolerable leakage rate [bits/s/Hz]
    r_tol_ul: float = 0.3
    weights_dl: tuple[float, ...] | None = None   # defaults to all-ones
    weights_ul: tuple[float, ...] | None = None
    penalty_eta: float | None = None              # None: 10*log2(1 + p_max_dl/noise_ul)

    path_loss_exponent: float = 3.6
    ref_distance_m: float = 15.0
    max_distance_m: float = 500.0
    bs_antenna_gain_db: float = 10.0
    rician_k_db: float = 5.0
    eve_colocated: bool = False      # True: all idle users share one location
    subcarrier_bandwidth_hz: float = 78e3

    rng_seed: int = 0
    sca_max_iter: int | None = None  # None: 2 * n_subcarriers
    refine_assignment_limit: int = 64   # run assignment coordinate descent when
                                        # (KJ+1)^N_F is at most this
    sca_rel_tol: float = 1e-4        # |dJ| <= tol * (1 + |J|)
    binarity_tol: float = 1e-3
    solver: SolverParams = field(default_factory=SolverParams)

    def __post_init__(self):
        if self.n_subcarriers < 1 or self.n_dl_users < 1 or self.n_ul_users < 1:
            raise ValueError("need at least one subcarrier, one DL user and one UL user")
        if self.n_eve_antennas < 1:
            raise ValueError("need at least one idle user (eavesdropper antenna)")
        if self.n_tx_antennas < 1:
            raise ValueError("n_tx_antennas must be >= 1")
        for name in ("p_max_dl", "p_max_ul", "noise_dl", "noise_ul", "noise_eve"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.r_tol_dl <= 0.0 or self.r_tol_ul <= 0.0:
            raise ValueError("leakage tolerances must be positive")
        if self.penalty_eta is not None and self.penalty_eta <= 0.0:
            raise ValueError("penalty_eta must be positive")
        if self.max_distance_m <= self.ref_distance_m:
            raise ValueError("max_distance_m must exceed ref_distance_m")
        for w in self.dl_weights() + self.ul_weights():
            if not 0.0 <= w <= 1.0:
                raise ValueError("user weights must lie in [0, 1]")

    def dl_weights(self) -> tuple[float, ...]:
        if self.weights_dl is None:
            return (1.0,) * self.n_dl_users
        if len(self.weights_dl) != self.n_dl_users:
            raise ValueError("weights_dl length must equal n_dl_users")
        return tuple(float(w) for w in self.weights_dl)

    def ul_weights(self) -> tuple[float, ...]:
        if self.weights_ul is None:
            return (1.0,) * self.n_ul_users
        if len(self.weights_ul) != self.n_ul_users:
            raise ValueError("weights_ul length must equal n_ul_users")
        return tuple(float(w) for w in self.weights_ul)

    def eta(self) -> float:
        """Penalty factor: 10*log2(1 + P_max^DL / sigma_UL^2) unless overridden."""
        if self.penalty_eta is not None:
            return float(self.penalty_eta)
        return 10.0 * math.log2(1.0 + self.p_max_dl / self.noise_ul)

    def max_iter(self) -> int:
        return self.sca_max_iter if self.sca_max_iter is not None else 2 * self.n_subcarriers

    def bs_gain_linear(self) -> float:
        return db_to_linear(self.bs_antenna_gain_db)

    def replace(self, **kwargs) -> "SystemConfig":
        return dataclasses.replace(self, **kwargs)


# Keys accepted in config files / CLI overrides; dBm/dB convenience keys
# are translated onto the linear-unit fields.
_DBM_KEYS = {
    "p_max_dl_dbm": "p_max_dl",
    "p_max_ul_dbm": "p_max_ul",
    "noise_dl_dbm": "noise_dl",
    "noise_ul_dbm": "noise_ul",
    "noise_eve_dbm": "noise_eve",
}
_DB_KEYS = {"rho_db": "rho"}
_TUPLE_KEYS = {"weights_dl", "weights_ul"}


def config_from_mapping(data: dict, base: SystemConfig | None = None) -> SystemConfig:
    """Build a SystemConfig from a flat key/value mapping.

    Unknown keys raise; dBm/dB convenience keys are converted. Values
    already present in `base` are kept unless overridden.
    """
    base = base or SystemConfig()
    valid = {f.name for f in dataclasses.fields(SystemConfig)}
    kwargs: dict = {}
    for key, value in data.items():
        if key in _DBM_KEYS:
            kwargs[_DBM_KEYS[key]] = dbm_to_watts(float(value))
        elif key in _DB_KEYS:
            kwargs[_DB_KEYS[key]] = db_to_linear(float(value))
        elif key in _TUPLE_KEYS:
            kwargs[key] = tuple(float(v) for v in value) if value is not None else None
        elif key == "solver":
            kwargs[key] = SolverParams(**value)
        elif key in valid:
            kwargs[key] = value
        else:
            raise KeyError(f"unknown config key: {key!r}")
    return base.replace(**kwargs)


def load_config(path: str, base: SystemConfig | None = None) -> SystemConfig:
    with open(path, "r") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a flat key/value mapping")
    return config_from_mapping(data, base)


def drop_rng(master_seed: int, drop_index: int) -> np.random.Generator:
    """Independent, reproducible stream for one channel drop."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(drop_index)]))
