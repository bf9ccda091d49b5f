"""Pipeline configuration: defaults, JSON config files, and flag overrides.

Precedence is flags > config file > defaults.  The config file path may come
from the ANCHOR_REFINE_CONFIG environment variable when no --config flag is
given.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .entropy import FilterParams
from .fusion import FusionParams

CONFIG_ENV_VAR = "ANCHOR_REFINE_CONFIG"

BACKEND_CHOICES = ("mock", "manifest", "http")


class ConfigError(ValueError):
    """A configuration file or value is invalid."""


@dataclass
class PipelineConfig:
    """Effective settings for the refinement pipeline and CLI."""

    w: int = 5
    tau: float = 1.0
    alpha: float = 0.7
    beta: int = 20000
    k: int = 1000
    seed: int = 0
    enhance: bool = True
    use_filter: bool = True
    use_sort: bool = True
    backend: str = "mock"
    endpoint: str | None = None
    manifest: str | None = None
    scene: str | None = None
    image_id: str | None = None
    ignore_label: int | None = None
    chunk_size: int | None = None

    def validate(self) -> None:
        """Surface invalid or badly typed values through the params constructors."""
        self.filter_params()
        self.fusion_params()
        try:
            if self.k < 0:
                raise ConfigError(f"anchor count must be non-negative, got {self.k}")
            if self.chunk_size is not None and self.chunk_size < 1:
                raise ConfigError(f"chunk size must be positive, got {self.chunk_size}")
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if self.backend not in BACKEND_CHOICES:
            raise ConfigError(
                f"backend must be one of {', '.join(BACKEND_CHOICES)}, got {self.backend!r}"
            )

    def filter_params(self) -> FilterParams:
        try:
            return FilterParams(self.w, self.tau)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def fusion_params(self) -> FusionParams:
        try:
            return FusionParams(
                self.alpha, self.beta, self.enhance, self.use_filter, self.use_sort
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(
    config_path: str | None, overrides: dict | None = None, env: dict | None = None
) -> PipelineConfig:
    """Build the effective config from defaults, an optional JSON file, and
    explicit overrides (highest precedence).  Unknown file keys are errors."""
    environment = os.environ if env is None else env
    if config_path is None:
        config_path = environment.get(CONFIG_ENV_VAR) or None
    config = PipelineConfig()
    known = {f.name for f in fields(PipelineConfig)}
    if config_path is not None:
        path = Path(config_path)
        try:
            obj = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        for key, value in obj.items():
            if key not in known:
                raise ConfigError(f"{path}: unknown config key {key!r}")
            setattr(config, key, value)
    for key, value in (overrides or {}).items():
        if key not in known:
            raise ConfigError(f"unknown config override {key!r}")
        if value is not None:
            setattr(config, key, value)
    config.validate()
    return config
