"""Sectioned key=value experiment configuration.

Configs are the reproducibility artifact: parsing is strict (unknown sections
or keys are rejected by name) and canonicalization is idempotent, so a
resolved config re-parses to an identical object.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass

from .errors import ConfigurationError
from .spectral import BENCHMARK_PDES, BoundarySpec, DirectionBC, assemble_system

__all__ = ["ExperimentConfig", "parse_config", "parse_config_text", "canonical_text", "build_system"]


@dataclass(frozen=True)
class ExperimentConfig:
    # [benchmark]
    pde: str = "helm1d"
    boundary: str = "dirichlet"
    n_modes: int = 16
    dimensions: int = 1  # joint_helm only; other benchmarks fix their own d
    epsilon: float = 0.1
    k_squared: float = 4.0
    nu: float = 1.0
    nu2: float = 1.0
    # [circuit]
    ansatz: str = "hardware_efficient_ry"
    layers: int = 8
    # [network]
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "gelu"
    conv_channels: tuple[int, ...] = ()
    conv_kernel: int = 3
    # [dataset]
    family: str = "trig_1d"
    train_size: int = 20
    test_size: int = 50
    data_seed: int = 11
    k_min: float = 4.0
    k_max: float = 5.0
    k_is_squared: bool = False
    # [train]
    objective: str = "unnormalized"
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 1000
    eval_every: int = 100
    gradient_mode: str = "adjoint"
    net_seed: int = 5
    # [study]
    thresholds: tuple[float, ...] = (0.5, 0.1, 0.05, 0.01)
    scaling_modes: tuple[int, ...] = (4, 8, 16, 32)
    scaling_dims: tuple[int, ...] = (1,)
    signflip_seeds: int = 10

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """CLI --seed override: reseeds data and network deterministically."""
        return dataclasses.replace(self, data_seed=seed, net_seed=seed + 1)


_SCHEMA = {
    "benchmark": {
        "pde": str,
        "boundary": str,
        "n_modes": int,
        "dimensions": int,
        "epsilon": float,
        "k_squared": float,
        "nu": float,
        "nu2": float,
    },
    "circuit": {"ansatz": str, "layers": int},
    "network": {
        "hidden": "int_list",
        "activation": str,
        "conv_channels": "int_list",
        "conv_kernel": int,
    },
    "dataset": {
        "family": str,
        "train_size": int,
        "test_size": int,
        "seed": int,
        "k_min": float,
        "k_max": float,
        "k_is_squared": bool,
    },
    "train": {
        "objective": str,
        "optimizer": str,
        "learning_rate": float,
        "beta1": float,
        "beta2": float,
        "epsilon": float,
        "epochs": int,
        "eval_every": int,
        "gradient_mode": str,
        "seed": int,
    },
    "study": {
        "thresholds": "float_list",
        "scaling_modes": "int_list",
        "scaling_dims": "int_list",
        "signflip_seeds": int,
    },
}

# (section, key) -> dataclass field; keys named "seed"/"epsilon" collide across
# sections, hence the indirection
_FIELD_OF = {
    ("dataset", "seed"): "data_seed",
    ("train", "seed"): "net_seed",
    ("train", "epsilon"): "adam_epsilon",
}


def _field_name(section: str, key: str) -> str:
    return _FIELD_OF.get((section, key), key)


def _parse_value(kind, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "int_list":
            return tuple(int(v) for v in raw.split(",") if v.strip()) if raw else ()
        if kind == "float_list":
            return tuple(float(v) for v in raw.split(",") if v.strip()) if raw else ()
        return raw
    except ValueError:
        raise ConfigurationError(f"invalid value {raw!r} for {where}") from None


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigurationError(f"malformed config: {err}") from None
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
            values[_field_name(section, key)] = _parse_value(
                _SCHEMA[section][key], raw, f"[{section}] {key}"
            )
    cfg = dataclasses.replace(ExperimentConfig(), **values)
    _validate(cfg)
    return cfg


def parse_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.pde not in BENCHMARK_PDES:
        raise ConfigurationError(f"unknown pde {cfg.pde!r}")
    if cfg.boundary not in ("dirichlet", "neumann"):
        raise ConfigurationError(f"unknown boundary {cfg.boundary!r}")
    if cfg.ansatz not in ("hardware_efficient_ry", "strongly_entangling"):
        raise ConfigurationError(f"unknown ansatz {cfg.ansatz!r}")
    if cfg.activation not in ("relu", "gelu", "identity"):
        raise ConfigurationError(f"unknown activation {cfg.activation!r}")
    if cfg.objective not in ("unnormalized", "normalized"):
        raise ConfigurationError(f"unknown objective {cfg.objective!r}")
    if cfg.optimizer not in ("adam", "lbfgs"):
        raise ConfigurationError(f"unknown optimizer {cfg.optimizer!r}")
    if cfg.gradient_mode not in ("adjoint", "parameter_shift"):
        raise ConfigurationError(f"unknown gradient_mode {cfg.gradient_mode!r}")
    if cfg.family not in ("shallow_ry", "trig_1d", "trig_2d", "wave_family", "joint_k"):
        raise ConfigurationError(f"unknown dataset family {cfg.family!r}")
    if cfg.n_modes < 2:
        raise ConfigurationError("n_modes must be >= 2")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def canonical_text(cfg: ExperimentConfig) -> str:
    """Stable, fully explicit rendering; parsing it reproduces cfg exactly."""
    out = io.StringIO()
    for section, keys in _SCHEMA.items():
        out.write(f"[{section}]\n")
        for key in keys:
            out.write(f"{key} = {_fmt(getattr(cfg, _field_name(section, key)))}\n")
        out.write("\n")
    return out.getvalue()


def build_system(cfg: ExperimentConfig):
    """Assemble the spectral system described by the benchmark section."""
    kind = cfg.boundary
    if cfg.pde == "wave1d":
        bc = BoundarySpec((DirectionBC.dirichlet(), DirectionBC.initial_value()))
    elif cfg.pde in ("rd2d", "helm2d", "cd2d") or (
        cfg.pde == "joint_helm" and cfg.dimensions == 2
    ):
        direction = DirectionBC.neumann() if kind == "neumann" else DirectionBC.dirichlet()
        bc = BoundarySpec((direction, direction))
    else:
        direction = DirectionBC.neumann() if kind == "neumann" else DirectionBC.dirichlet()
        bc = BoundarySpec((direction,))
    params = {
        "epsilon": cfg.epsilon,
        "k_squared": cfg.k_squared,
        "nu": cfg.nu,
        "nu1": cfg.nu,
        "nu2": cfg.nu2,
    }
    return assemble_system(cfg.pde, params, bc, cfg.n_modes)
