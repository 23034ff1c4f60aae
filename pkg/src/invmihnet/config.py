"""Run configuration and its ``key = value`` text format.

Precedence, lowest to highest: dataclass defaults, config file, ``INVMIH_<KEY>``
environment variables, explicit overrides (command-line flags).
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from .coupling import SubnetConfig
from .losses import LossWeights
from .model import ModelConfig
from .transforms import MosaicLayout, layout_for_count

__all__ = ["ConfigError", "TrainConfig", "STAGES", "parse_config", "load_config", "dump_config", "ENV_PREFIX"]

STAGES = ("iir_warmup", "iih_warmup", "joint")
ENV_PREFIX = "INVMIH_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    # stage: one of STAGES, or "all" for warm-ups then joint
    stage: str = "all"
    iterations: int = 20000
    warmup_iterations: int = 30000
    joint_iterations: int = 20000
    batch_size: int = 4
    patch_size: int = 144
    base_lr: float = 2e-4
    lr_halving_period: int = 10000
    seed: int = 0
    m: int = 2
    n: int = 2
    lambda1: float = 1.0
    lambda2: float = 4.0
    lambda3: float = 5.0
    iir_blocks: int = 8
    iih_blocks: int = 16
    subnet_layers: int = 5
    growth_channels: int = 32
    kernel_size: int = 3
    clamp_constant: float = 2.0
    histogram_bins: int = 64
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 10.0
    checkpoint_interval: int = 1000
    latent_mode: str = "normal"
    deterministic: bool = False

    def __post_init__(self):
        if self.stage not in STAGES + ("all",):
            raise ConfigError(f"stage must be one of {STAGES + ('all',)}, got {self.stage!r}")
        for name in ("batch_size", "patch_size", "lr_halving_period", "m", "n", "checkpoint_interval"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("iterations", "warmup_iterations", "joint_iterations", "iir_blocks", "iih_blocks"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.patch_size % (2 * self.m) or self.patch_size % (2 * self.n):
            raise ConfigError(
                f"patch_size {self.patch_size} must be divisible by 2m={2 * self.m} and 2n={2 * self.n}"
            )
        if self.latent_mode not in ("normal", "zeros"):
            raise ConfigError(f"latent_mode must be 'normal' or 'zeros', got {self.latent_mode!r}")
        try:
            self.subnet_config()
            self.loss_weights()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def layout(self) -> MosaicLayout:
        return MosaicLayout(self.m, self.n)

    @property
    def count(self) -> int:
        return self.m * self.n

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.lambda3)

    def subnet_config(self) -> SubnetConfig:
        return SubnetConfig(self.subnet_layers, self.growth_channels, self.kernel_size, self.clamp_constant)

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.m, self.n, self.iir_blocks, self.iih_blocks, 3, self.subnet_config())

    def stage_plan(self) -> list[tuple[str, int]]:
        if self.stage == "all":
            return [
                ("iir_warmup", self.warmup_iterations),
                ("iih_warmup", self.warmup_iterations),
                ("joint", self.joint_iterations),
            ]
        return [(self.stage, self.iterations)]

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**values)


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: str) -> Any:
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind in ("bool", bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind in ("int", int):
        return int(raw)
    if kind in ("float", float):
        return float(raw)
    return raw


def _apply_count(values: dict[str, Any], count: int, where: str) -> None:
    grid = layout_for_count(count)
    if "m" in values or "n" in values:
        if values.get("m", grid.m) * values.get("n", grid.n) != count:
            raise ConfigError(f"{where}: num_secrets={count} disagrees with m x n")
        return
    values["m"], values["n"] = grid.m, grid.n


def parse_config(text: str, source: str = "<config>") -> dict[str, Any]:
    """Parse ``key = value`` lines into raw typed values (not yet validated).

    ``num_secrets = N`` is accepted as shorthand for the most square grid.
    """
    values: dict[str, Any] = {}
    count: Optional[int] = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        try:
            if key == "num_secrets":
                count = int(raw)
                continue
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, raw)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    if count is not None:
        _apply_count(values, count, source)
    return values


def env_overrides(environ: Mapping[str, str]) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for key in _FIELD_TYPES:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            try:
                values[key] = _coerce(key, environ[name])
            except ValueError as exc:
                raise ConfigError(f"{name}: {exc}") from exc
    if ENV_PREFIX + "NUM_SECRETS" in environ:
        _apply_count(values, int(environ[ENV_PREFIX + "NUM_SECRETS"]), "environment")
    return values


def load_config(
    path: Optional[Union[str, Path]] = None,
    environ: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> TrainConfig:
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config(text, str(path)))
    values.update(env_overrides(os.environ if environ is None else environ))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return TrainConfig.from_dict(values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(cfg: TrainConfig) -> str:
    lines = [f"{k} = {str(v).lower() if isinstance(v, bool) else v}" for k, v in cfg.to_dict().items()]
    return "\n".join(lines) + "\n"
