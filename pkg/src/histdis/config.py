"""Run configuration: versioned JSON schema with strict key checking."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError

CONFIG_VERSION = 1


@dataclass
class RunConfig:
    seed: int = 0
    image_size: int = 64
    n_x: int = 4
    n_y: int = 8
    n_b: int = 2
    setting: str = "iii"
    tau: float = 0.5
    batch_size: int = 24
    lr_filter: float = 0.001
    lr_generator: float = 0.05
    steps: int = 100
    hybrid_every: int = 4
    optimizer: str = "sgd"
    filter_widths: tuple[int, ...] = (64, 128, 192)
    out_dir: str = "out"

    def validate(self) -> None:
        if self.setting not in ("i", "ii", "iii", "iv"):
            raise ConfigError(f"setting: must be one of i/ii/iii/iv, got {self.setting!r}")
        if self.n_x >= self.n_y:
            raise ConfigError(f"n_x: hierarchy requires n_x < n_y "
                              f"(got n_x={self.n_x}, n_y={self.n_y})")
        positive = ("image_size", "n_x", "n_y", "n_b", "tau", "batch_size",
                    "lr_filter", "lr_generator", "hybrid_every")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}: must be positive, got {getattr(self, name)}")
        if self.steps < 0:
            raise ConfigError(f"steps: must be >= 0, got {self.steps}")
        if self.seed < 0:
            raise ConfigError(f"seed: must be >= 0, got {self.seed}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer: must be 'sgd' or 'adam', got {self.optimizer!r}")
        if len(self.filter_widths) < 1:
            raise ConfigError("filter_widths: must not be empty")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filter_widths"] = list(self.filter_widths)
        d["config_version"] = CONFIG_VERSION
        # where results land is an execution detail, not part of the run
        # identity; keeping it out makes artifacts byte-stable across
        # output locations
        del d["out_dir"]
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        version = raw.pop("config_version", None)
        if version != CONFIG_VERSION:
            raise ConfigError(f"config_version: expected {CONFIG_VERSION}, got {version!r}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "filter_widths" in raw:
            raw["filter_widths"] = tuple(raw["filter_widths"])
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(raw)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
