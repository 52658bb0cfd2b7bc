"""Flat ``key = value`` run configuration.

Precedence when the CLI builds a config: command-line flags, then the config
file, then the defaults below.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .image_core import InvalidInputError
from .sampler import GuidanceConfig

__all__ = ["ConfigError", "RunConfig", "parse_config_text", "load_config", "dump_config"]


class ConfigError(InvalidInputError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class RunConfig:
    # guidance (mirrors GuidanceConfig)
    T: int = 10
    N: int = 2
    s: float = 1.0
    lambda_exp: float = 1200.0
    lambda_ref: float = 0.03
    lambda_stru: float = 10000.0
    enable_exp: bool = True
    enable_ref: bool = True
    enable_stru: bool = True
    injection_mode: str = "sasi"
    retinex_grad_mode: str = "frozen"
    stru_grad_mode: str = "frozen"
    exposure_base: float = 0.55
    exposure_amplitude: float = 0.15
    seed: int = 0
    # schedule
    beta_start: float = 1e-4
    beta_end: float = 0.02
    # priors
    predictor: str = "mixture"
    gallery: str = ""
    reference: str = ""
    restorer: str = "unsharp"
    unsharp_amount: float = 1.0
    unsharp_sigma: float = 1.0
    # io and bench
    input: str = ""
    output: str = ""
    trace: str = ""
    n_list: list[int] = field(default_factory=lambda: [1, 2, 4])
    repeats: int = 1
    threads: int = 1

    def guidance(self) -> GuidanceConfig:
        names = {f.name for f in fields(GuidanceConfig)}
        return GuidanceConfig(**{k: getattr(self, k) for k in names})

    def validate_paths(self, *keys: str) -> None:
        for key in keys:
            value = getattr(self, key)
            if not value:
                raise ConfigError(key, "is required")
            if not Path(value).exists():
                raise ConfigError(key, f"path does not exist: {value}")


_FIELDS = {f.name: f for f in fields(RunConfig)}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str):
    default = getattr(RunConfig(), key)
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            return [int(v) for v in raw.split(",") if v.strip()]
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"line {lineno} is not 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(key, "unknown key")
        setattr(cfg, key, _coerce(key, value))
    return cfg


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(), base)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{name} = {_format(getattr(cfg, name))}\n" for name in _FIELDS)
