"""Declarative experiment configuration (one JSON document per run)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

METHODS = ("pinda", "random_noise", "simcl_repr_noise", "plain_infonce")
NOISE_KINDS = ("gaussian_zero_mean", "gaussian_learned_mean", "uniform", "dirac")


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    csv: str | None = None
    test_csv: str | None = None
    has_labels: bool = True
    has_header: bool = False
    synthetic: dict | None = None
    rescale: str = "standardize"


@dataclass
class EncoderConfig:
    hidden: list[int] = field(default_factory=lambda: [1024, 1024])
    embed_dim: int = 256
    head: list[int] = field(default_factory=lambda: [256, 128])


@dataclass
class GeneratorConfig:
    kind: str = "gaussian_zero_mean"
    hidden: list[int] = field(default_factory=lambda: [1024, 1024])
    sigma_floor: float = 1e-6
    epsilon0: list[float] | None = None


@dataclass
class EvalConfig:
    k: int = 5
    sr_epochs: int = 50
    sr_batch_size: int = 256
    sr_lr: float = 1e-3
    split_seed: int = 0
    test_fraction: float = 0.2


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    method: str = "pinda"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    temperature: float = 0.1
    positive_loss_variant: str = "simclr"
    symmetric: bool = True
    batch_size: int = 256
    epochs: int = 200
    lr: float = 1e-3
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    lambda_norm: float = 1.0
    augmentations: list[dict] = field(default_factory=list)
    mc_samples: int = 1
    simcl_scale: float = 1.0
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> ExperimentConfig:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.generator.kind not in NOISE_KINDS:
            raise ConfigError(f"generator kind must be one of {NOISE_KINDS}")
        positive = {
            "temperature": self.temperature, "batch_size": self.batch_size, "lr": self.lr,
            "mc_samples": self.mc_samples, "eval.k": self.eval.k, "eval.sr_epochs": self.eval.sr_epochs,
            "eval.sr_batch_size": self.eval.sr_batch_size, "eval.sr_lr": self.eval.sr_lr,
            "encoder.embed_dim": self.encoder.embed_dim,
        }
        for key, value in positive.items():
            if not value > 0:
                raise ConfigError(f"{key} must be positive")
        for key in ("epochs", "lambda_norm", "simcl_scale", "generator.sigma_floor"):
            obj, _, attr = key.rpartition(".")
            value = getattr(getattr(self, obj) if obj else self, attr)
            if value < 0:
                raise ConfigError(f"{key} must be non-negative")
        if any(w <= 0 for w in [*self.encoder.hidden, *self.encoder.head, *self.generator.hidden]):
            raise ConfigError("layer widths must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.dataset.csv is None and self.dataset.synthetic is None:
            raise ConfigError("dataset needs either a csv path or a synthetic spec")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        return _build(cls, d).validate()

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


_NESTED = {"dataset": DatasetConfig, "encoder": EncoderConfig, "generator": GeneratorConfig, "eval": EvalConfig}


def _build(cls, d):
    if not isinstance(d, dict):
        raise ConfigError(f"expected an object for {cls.__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in d.items():
        if cls is ExperimentConfig and key in _NESTED:
            value = _build(_NESTED[key], value)
        kwargs[key] = value
    return cls(**kwargs)
