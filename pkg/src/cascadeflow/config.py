"""Run configuration: named presets, JSON files and dotted ``key=value`` overrides."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .errors import CascadeError


class ConfigError(CascadeError):
    pass


@dataclass
class Paths:
    data: str = ""
    schema: str = ""
    out: str = "run"


@dataclass
class EncoderConfig:
    kind: str = "dt"
    max_depth: int = 8
    max_components: int = 30
    min_leaf: int = 32


@dataclass
class ModelConfig:
    emb_dim: int = 16
    cond_dim: int = 64
    time_dim: int = 32
    hidden: list[int] = field(default_factory=lambda: [256, 256, 256])
    schedule_hidden: list[int] = field(default_factory=lambda: [128])


@dataclass
class TrainingConfig:
    steps: int = 2000
    batch: int = 256
    lr: float = 2e-3
    ema: float = 0.995  # 0 disables weight averaging
    decay_from: float = 0.5  # learning rate falls linearly to 0 after this share of steps
    seed: int = 0
    max_seconds: float = 0.0  # 0 disables the wall-clock cap
    log_every: int = 50


@dataclass
class SamplingConfig:
    n: int = 1000
    steps: int = 200
    seed: int = 0


@dataclass
class MnarConfig:
    p: float = 0.10
    seed: int = 0


@dataclass
class MetricsConfig:
    detection: bool = True
    mle: bool = True
    privacy: bool = True
    n_iter: int = 500
    one_hot_limit: int = 16
    n_mc: int = 100_000


@dataclass
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    mnar: MnarConfig = field(default_factory=MnarConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


PRESETS = {
    "desk": {"training": {"steps": 2000, "batch": 256}},
    "full": {"training": {"steps": 30000, "batch": 4096}},
}


def _merge(obj, updates: dict, where: str = "") -> None:
    names = {f.name: f for f in fields(obj)}
    for key, value in updates.items():
        if key not in names:
            raise ConfigError(f"unknown config key {where + key!r}")
        cur = getattr(obj, key)
        if is_dataclass(cur):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {where + key!r} must be an object")
            _merge(cur, value, f"{where}{key}.")
        else:
            setattr(obj, key, _coerce(cur, value, where + key))


def _coerce(current, value, key: str):
    try:
        if isinstance(current, bool):
            if isinstance(value, str):
                if value.lower() in ("1", "true", "yes", "on"):
                    return True
                if value.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            return bool(value)
        if isinstance(current, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, list):
            if isinstance(value, str):
                value = json.loads(value)
            return [int(v) for v in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {value!r} for {key!r}") from None


def parse_override(text: str) -> dict:
    """'training.steps=500' -> {'training': {'steps': '500'}}."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, value = text.split("=", 1)
    parts = key.strip().split(".")
    out: dict = {}
    cur = out
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = value
    return out


def load_config(path: str | Path | None = None, preset: str = "desk", overrides=()) -> RunConfig:
    """Preset defaults, then the JSON file (if any), then each override in order."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    cfg = RunConfig()
    _merge(cfg, copy.deepcopy(PRESETS[preset]))
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{p}: invalid JSON ({e})") from None
        _merge(cfg, data)
    for text in overrides:
        _merge(cfg, parse_override(text))
    if cfg.encoder.kind not in ("dt", "gmm"):
        raise ConfigError("encoder.kind must be 'dt' or 'gmm'")
    return cfg
