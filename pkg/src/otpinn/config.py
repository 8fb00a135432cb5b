"""Run configuration: closed JSON schema with per-system presets."""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
from dataclasses import dataclass, field

from .optim import OptimizerSettings
from .residual import BOUNDARY_MODES

__all__ = ["TrainingConfig", "ConfigError", "load_config", "config_from_dict", "dump_config", "resolve_seed"]

# Domain and nominal spacing used for each built-in system when not given.
PRESETS = {
    "vdp_rayleigh": {"lower": -2.0, "upper": 2.0, "dx_train": 0.25},
    "vdp": {"lower": -4.0, "upper": 4.0, "dx_train": 0.1},
    "ou1d": {"lower": -2.0, "upper": 2.0, "dx_train": 0.1},
    "custom": {"lower": -2.0, "upper": 2.0, "dx_train": 0.25},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    system: str = "vdp_rayleigh"
    sigma2: float = 0.1
    drift: list | None = None  # custom systems only: one expression per component
    noise: list | None = None  # custom systems only: Lambda / sigma, n x m
    lower: float | list | None = None
    upper: float | list | None = None
    dx_train: float | None = None
    dx_test: float = 0.05
    dx_quad: float | None = None
    M: int = 200
    nOT: int = 10
    H: int = 48
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    boundary_mode: str = "exp_zero"
    eta_max: float = 0.0
    eps_pde_form: str = "eta"
    cost: str = "euclidean"
    ot_solver: str = "auto"  # exact, sinkhorn or auto (exact up to exact_max_M)
    exact_max_M: int = 512
    sinkhorn_epsilon: float = 0.01  # fraction of the median cost
    sinkhorn_max_sweeps: int = 10000
    seed: int | None = None  # drawn from entropy at run time when omitted

    @property
    def n(self) -> int:
        if self.system == "custom":
            return len(self.drift)
        return 1 if self.system == "ou1d" else 2

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def bounds(self):
        lo = self.lower if isinstance(self.lower, list) else [self.lower] * self.n
        hi = self.upper if isinstance(self.upper, list) else [self.upper] * self.n
        return [float(v) for v in lo], [float(v) for v in hi]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d


_FIELDS = {f.name for f in dataclasses.fields(TrainingConfig)}
_OPT_FIELDS = {f.name for f in dataclasses.fields(OptimizerSettings)}


def _validate(cfg: TrainingConfig):
    systems = set(PRESETS)
    if cfg.system not in systems:
        raise ConfigError(f"system must be one of {sorted(systems)}")
    if cfg.system == "custom":
        if not cfg.drift or not all(isinstance(s, str) for s in cfg.drift):
            raise ConfigError("custom systems need 'drift': a list of expression strings")
    elif cfg.drift is not None or cfg.noise is not None:
        raise ConfigError("'drift' and 'noise' apply to custom systems only")
    checks = [
        (cfg.sigma2 > 0, "sigma2 must be positive"),
        (cfg.M >= 1, "M must be >= 1"),
        (cfg.nOT >= 0, "nOT must be >= 0"),
        (cfg.H >= 1, "H must be >= 1"),
        (cfg.dx_train > 0 and cfg.dx_test > 0 and cfg.dx_quad > 0, "grid spacings must be positive"),
        (cfg.dx_test <= cfg.dx_train, "dx_test must not exceed dx_train"),
        (cfg.boundary_mode in BOUNDARY_MODES, f"boundary_mode must be one of {BOUNDARY_MODES}"),
        (cfg.eps_pde_form in ("eta", "rho"), "eps_pde_form must be 'eta' or 'rho'"),
        (cfg.cost in ("euclidean", "sq_euclidean"), "cost must be 'euclidean' or 'sq_euclidean'"),
        (cfg.ot_solver in ("auto", "exact", "sinkhorn"), "ot_solver must be auto, exact or sinkhorn"),
        (cfg.sinkhorn_epsilon > 0, "sinkhorn_epsilon must be positive"),
        (cfg.seed is None or (isinstance(cfg.seed, int) and cfg.seed >= 0), "seed must be a non-negative int"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    lo, hi = cfg.bounds()
    if len(lo) != cfg.n or len(hi) != cfg.n or any(a >= b for a, b in zip(lo, hi)):
        raise ConfigError("domain bounds must give lower < upper on every axis")


def config_from_dict(data: dict) -> TrainingConfig:
    """Resolve a (possibly partial) mapping into a validated config with all defaults filled."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    data = dict(data)
    opt = data.pop("optimizer", None) or {}
    if not isinstance(opt, dict):
        raise ConfigError("optimizer must be an object")
    bad = set(opt) - _OPT_FIELDS
    if bad:
        raise ConfigError(f"unknown optimizer key(s): {sorted(bad)}")
    try:
        settings = OptimizerSettings(**opt)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid optimizer settings: {err}") from err
    system = data.get("system", "vdp_rayleigh")
    preset = PRESETS.get(system, PRESETS["custom"])
    for key, value in preset.items():
        if data.get(key) is None:
            data[key] = value
    if data.get("dx_quad") is None:
        data["dx_quad"] = data.get("dx_test", TrainingConfig.dx_test)
    try:
        cfg = TrainingConfig(optimizer=settings, **data)
    except TypeError as err:
        raise ConfigError(str(err)) from err
    try:
        _validate(cfg)
    except TypeError as err:
        raise ConfigError(f"invalid value type: {err}") from err
    return cfg


def load_config(path) -> TrainingConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from err
    return config_from_dict(data)


def dump_config(cfg: TrainingConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def resolve_seed(cfg: TrainingConfig) -> TrainingConfig:
    """Return ``cfg`` with a concrete seed, drawing one from OS entropy if it is missing."""
    if cfg.seed is not None:
        return cfg
    seed = int(np.random.SeedSequence().entropy % 2**32)
    return dataclasses.replace(cfg, seed=seed)
