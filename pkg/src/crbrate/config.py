"""Run configuration: a flat JSON object, powers in dB."""

import json
import math
from dataclasses import dataclass, field, fields

from .errors import ContractError
from .model import SystemConfig, db_to_linear

SCHEMES = ("optimal", "beamforming", "isotropic")


@dataclass
class RunConfig:
    n_tx: int = 4
    n_rx: int = 4
    symbols: int = 256
    power_db: float = 0.0
    noise_comm_db: float = 0.0
    noise_radar_db: float = 0.0

    users: int = 3
    seed: int = 0
    channels: str = None  # CSV path; overrides seeded generation
    normalize_channels: bool = True

    gamma_lo: float = None  # default CRB_min * 1.0001
    gamma_hi: float = None  # default CRB_com; required when CRB_com is infinite
    points: int = 20
    spacing: str = "log"
    schemes: list = field(default_factory=lambda: list(SCHEMES))

    gamma_bar: float = 0.5
    k_list: list = field(default_factory=lambda: [3, 5, 10, 20, 35])
    trials: int = 20

    mc_trials: int = 500
    mc_scheme: str = "isotropic"

    gap_tol: float = 1e-4
    sca_tol: float = 1e-4
    max_sca_iter: int = 30

    def __post_init__(self):
        if self.points < 2:
            raise ContractError("points must be >= 2")
        if self.spacing not in ("log", "linear"):
            raise ContractError("spacing must be 'log' or 'linear'")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown or not self.schemes:
            raise ContractError(f"schemes must be a non-empty subset of {SCHEMES}")
        if self.mc_scheme not in SCHEMES:
            raise ContractError(f"mc_scheme must be one of {SCHEMES}")
        if self.users < 2:
            raise ContractError("users must be >= 2")
        if self.trials < 1 or self.mc_trials < 1:
            raise ContractError("trials and mc_trials must be >= 1")
        if any(int(k) < 2 for k in self.k_list):
            raise ContractError("every entry of k_list must be >= 2")
        for name in ("gamma_lo", "gamma_hi", "gamma_bar"):
            v = getattr(self, name)
            if v is not None and not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ContractError(f"{name} must be a positive number")
        self.system  # validate eagerly

    @property
    def system(self):
        return SystemConfig(
            n_tx=self.n_tx,
            n_rx=self.n_rx,
            symbols=self.symbols,
            noise_comm=db_to_linear(self.noise_comm_db),
            noise_radar=db_to_linear(self.noise_radar_db),
            power=db_to_linear(self.power_db),
        )

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ContractError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ContractError(f"unknown config keys: {', '.join(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ContractError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ContractError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ContractError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)
