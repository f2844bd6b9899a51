"""Run configuration: one flat key/value file covering model, training and generator settings.

File format, one setting per line::

    # comment
    d_h = 32
    scales = [1, 3, 7]
    optimizer = adam
    data = runs/data.jsonl

Values are read as JSON literals when they parse (numbers, ``true``/``false``,
lists, quoted strings) and as bare strings otherwise. Every key is a field of
:class:`RunConfig`; unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import List, Optional, Tuple

from .model import ModelConfig
from .synthgen import GenConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field name."""


@dataclass
class RunConfig:
    # shared
    seed: int = 0
    d: int = 8
    # model
    d_h: int = 32
    scales: Tuple[int, ...] = (1, 3, 7)
    tau: float = 1.0
    tau_learnable: bool = False
    L_max: int = 200
    align: bool = True
    # training
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    early_stop_patience: int = 10
    split: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    max_seconds: Optional[float] = None
    threshold: float = 0.5
    # generator
    n_items: int = 2000
    positive_rate: float = 0.3
    gap_hours: float = 4.0
    T_min: int = 20
    T_max: int = 300
    noise_std: float = 0.5
    trend_slope: float = 0.02
    burst_magnitude: float = 2.0
    burst_width: int = 3
    late_signal: bool = True
    missing_rate: float = 0.15
    # paths
    data: Optional[str] = None
    checkpoint: str = "mstan_checkpoint.json"
    out: Optional[str] = None

    def model_config(self, **overrides) -> ModelConfig:
        kw = dict(d=self.d, d_h=self.d_h, scales=tuple(self.scales), tau=self.tau,
                  tau_learnable=self.tau_learnable, L_max=self.L_max, seed=self.seed, align=self.align)
        kw.update(overrides)
        return ModelConfig(**kw)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
                           optimizer=self.optimizer, early_stop_patience=self.early_stop_patience,
                           split=tuple(self.split), seed=self.seed, max_seconds=self.max_seconds)

    def gen_config(self) -> GenConfig:
        return GenConfig(**{k: getattr(self, k) for k in GenConfig.field_names()})

    def validate(self) -> "RunConfig":
        """Check every field; raise ConfigError naming the first bad one."""
        for f in fields(self):
            value = getattr(self, f.name)
            _check_type(f.name, value, f.default)
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold: must lie in (0, 1)")
        for build in (self.model_config, self.train_config, self.gen_config):
            try:
                cfg = build()
                if hasattr(cfg, "validate"):
                    cfg.validate()
            except ValueError as exc:
                msg = str(exc)
                # component validators start their messages with the field name
                if msg.split()[0] in _FIELD_NAMES:
                    raise ConfigError(msg) from None
                raise ConfigError(f"config: {msg}") from None
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scales"] = list(self.scales)
        d["split"] = list(self.split)
        return d

    def config_hash(self) -> str:
        """Hash of every field that can change a result; I/O paths are left out."""
        d = {k: v for k, v in self.to_dict().items() if k not in _PATH_FIELDS}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_PATH_FIELDS = ("data", "checkpoint", "out")
_FIELD_NAMES = {f.name for f in fields(RunConfig)}
_TUPLE_FIELDS = {"scales", "split"}


def _check_type(name, value, default):
    if name in _TUPLE_FIELDS:
        if not isinstance(value, (list, tuple)) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{name}: expected a list of numbers, got {value!r}")
        return
    if name in ("data", "out", "max_seconds"):
        if value is None:
            return
    if isinstance(default, bool) or name in ("tau_learnable", "late_signal", "align"):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float) or name == "max_seconds":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(f"{name}: invalid value {value!r}")


def parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _coerce(name: str, value):
    if name in _TUPLE_FIELDS and isinstance(value, list):
        return tuple(value)
    if name in ("tau", "learning_rate", "positive_rate", "gap_hours", "noise_std", "trend_slope",
                "burst_magnitude", "missing_rate", "threshold", "max_seconds") \
            and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if name in ("data", "checkpoint", "out", "optimizer") and value is not None and not isinstance(value, str):
        return str(value)
    return value


def apply_overrides(cfg: RunConfig, pairs) -> RunConfig:
    for key, value in pairs:
        if key not in _FIELD_NAMES:
            raise ConfigError(f"{key}: unknown configuration key")
        setattr(cfg, key, _coerce(key, value))
    return cfg


def read_config_text(text: str, where: str = "<config>") -> List[Tuple[str, object]]:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config: {where}:{lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        pairs.append((key.strip(), parse_value(raw)))
    return pairs


def load_config(path=None, overrides=()) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config: file not found: {path}")
        apply_overrides(cfg, read_config_text(p.read_text(), str(p)))
    apply_overrides(cfg, overrides)
    return cfg.validate()


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        lines.append(f"{k} = {json.dumps(v)}" if not isinstance(v, str) else f"{k} = {v}")
    return "\n".join(lines) + "\n"
