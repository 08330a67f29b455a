"""Run configuration: one key-value file with sections, overridable by flags.

Every field has a default; the resolved configuration is snapshotted into the
run directory and hashed (output location excluded) so checkpoints can be
tied to the exact settings that produced them.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

from .anonymizer import AnonymizerConfig
from .dataset import DatasetConfig
from .evaluation import EvalConfig
from .losses import LossConfig
from .networks import ModelConfig
from .training import TrainConfig


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    prepared_dir: str = ""  # defaults to <out_dir>/prepared
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    anonymize: AnonymizerConfig = field(default_factory=AnonymizerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def resolve(self) -> "RunConfig":
        """Propagate the run seed and shared sizes into the sub-configs."""
        self.train.seed = self.seed
        self.eval.seed = self.seed
        self.dataset.image_size = self.model.image_size
        if not self.prepared_dir:
            self.prepared_dir = str(Path(self.out_dir) / "prepared")
        return self


_SECTIONS = ("dataset", "model", "loss", "train", "anonymize", "eval")


def _parse_value(raw: str, sample):
    raw = raw.strip()
    if isinstance(sample, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if isinstance(sample, int):
        return int(raw)
    if isinstance(sample, float):
        return float(raw)
    if isinstance(sample, tuple):
        if not raw:
            return ()
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if sample and isinstance(sample[0], float):
            return tuple(float(p) for p in parts)
        return tuple(int(p) for p in parts)
    return raw


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def load_config(path: str | Path | None = None,
                overrides: dict | None = None) -> RunConfig:
    """Defaults, then file values, then flag overrides; returns resolved config."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(str(path))
        if not read:
            raise ConfigError(f"config file not found: {path}")
        if parser.has_section("run"):
            for key, raw in parser.items("run"):
                if not hasattr(cfg, key) or key in _SECTIONS:
                    raise ConfigError(f"unknown [run] key: {key}")
                setattr(cfg, key, _parse_value(raw, getattr(cfg, key)))
        for section in _SECTIONS:
            if not parser.has_section(section):
                continue
            sub = getattr(cfg, section)
            valid = {f.name for f in dataclasses.fields(sub)}
            for key, raw in parser.items(section):
                if key not in valid:
                    raise ConfigError(f"unknown [{section}] key: {key}")
                setattr(sub, key, _parse_value(raw, getattr(sub, key)))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        setattr(cfg, key, value)
    return cfg.resolve()


def to_ini(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser()
    parser["run"] = {
        "seed": _format_value(cfg.seed),
        "out_dir": cfg.out_dir,
        "prepared_dir": cfg.prepared_dir,
    }
    for section in _SECTIONS:
        sub = getattr(cfg, section)
        parser[section] = {f.name: _format_value(getattr(sub, f.name))
                           for f in dataclasses.fields(sub)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def config_hash(cfg: RunConfig) -> str:
    """Hash of everything that affects results; output paths excluded."""
    parser = configparser.ConfigParser()
    parser.read_string(to_ini(cfg))
    parser.remove_option("run", "out_dir")
    parser.remove_option("run", "prepared_dir")
    buf = io.StringIO()
    parser.write(buf)
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()[:16]


def write_snapshot(cfg: RunConfig, run_dir: str | Path) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    snapshot = run_dir / "config.ini"
    snapshot.write_text(to_ini(cfg))
    return snapshot
