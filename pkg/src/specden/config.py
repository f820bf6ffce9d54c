"""JSON experiment configuration.

A config is a nested JSON object; every section is optional and filled with
defaults, unknown keys anywhere are rejected. The three component toggles
live in ``toggles`` and override the ``enabled`` flags of the model
sections. Example::

    {
      "noise": {"kind": "gaussian_fixed", "sigma": 25, "seed": 1},
      "data": {"corpus": "toy", "count": 16, "size": 128, "seed": 0},
      "model": {"channels": [16, 32], "bottleneck": 64,
                "ssr": {"k": 8}, "lipschitz": {"beta": 1.0}, "fsd": {"cutoff": 0.25}},
      "train": {"epochs": 30, "batch_size": 8, "seed": 0},
      "bands": 5,
      "output_dir": "runs/default",
      "toggles": {"fsd": false, "lipschitz": false, "ssr": false}
    }

``data`` may instead name a directory of PGM/PPM files: ``{"dir": "imgs/"}``.
The config hash is the SHA-256 of the canonical JSON of the fully resolved
config, excluding ``output_dir`` (where results go does not change them).
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .model import FsdConfig, LipschitzConfig, ModelConfig
from .noise import NoiseModel
from .ssr import SsrConfig
from .train import TrainConfig

OUTPUT_ENV = "SPECDEN_OUTPUT_DIR"
TOGGLES = ("fsd", "lipschitz", "ssr")


class ConfigError(ValueError):
    pass


def _dc_from_dict(cls, d: Any, where: str, skip: tuple[str, ...] = ()):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)} - set(skip)
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def _dc_to_dict(obj, skip: tuple[str, ...] = ()) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


@dataclass
class DataConfig:
    corpus: Optional[str] = "toy"
    count: int = 16
    size: int = 128
    seed: int = 0
    dir: Optional[str] = None

    def __post_init__(self):
        if self.dir is None and self.corpus != "toy":
            raise ValueError("data needs either corpus='toy' or a dir")
        if self.count < 1 or self.size < 2:
            raise ValueError("data.count and data.size must be positive")


@dataclass
class ExperimentConfig:
    noise: NoiseModel = field(default_factory=lambda: NoiseModel("gaussian_fixed", sigma=25, seed=1))
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str = "runs/default"

    @property
    def bands(self) -> int:
        return self.train.bands

    @property
    def seed(self) -> int:
        return self.train.seed

    @property
    def toggles(self) -> dict[str, bool]:
        m = self.model
        return {"fsd": m.fsd.enabled, "lipschitz": m.lipschitz.enabled, "ssr": m.ssr.enabled}

    def with_toggles(self, **flags: bool) -> "ExperimentConfig":
        m = self.model
        for name in flags:
            if name not in TOGGLES:
                raise ConfigError(f"unknown toggle {name!r}")
        model = dataclasses.replace(
            m,
            fsd=dataclasses.replace(m.fsd, enabled=flags.get("fsd", m.fsd.enabled)),
            lipschitz=dataclasses.replace(m.lipschitz, enabled=flags.get("lipschitz", m.lipschitz.enabled)),
            ssr=dataclasses.replace(m.ssr, enabled=flags.get("ssr", m.ssr.enabled)),
        )
        return dataclasses.replace(self, model=model)

    @classmethod
    def from_dict(cls, d: Any) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {"noise", "data", "model", "train", "bands", "output_dir", "toggles"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        d = copy.deepcopy(d)
        try:
            noise = NoiseModel.from_dict(d.get("noise", cls().noise.to_dict()))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"noise: {e}") from e
        data = _dc_from_dict(DataConfig, d.get("data", {}), "data")

        m = d.get("model", {})
        if not isinstance(m, dict):
            raise ConfigError("model must be an object")
        m = dict(m)
        ssr = _dc_from_dict(SsrConfig, m.pop("ssr", {}), "model.ssr", skip=("enabled",))
        lip = _dc_from_dict(LipschitzConfig, m.pop("lipschitz", {}), "model.lipschitz", skip=("enabled",))
        fsd = _dc_from_dict(FsdConfig, m.pop("fsd", {}), "model.fsd", skip=("enabled",))
        for sub in ("ssr", "lipschitz", "fsd"):
            if sub in d.get("model", {}) and "enabled" in d["model"][sub]:
                raise ConfigError(f"model.{sub}.enabled is set through toggles.{sub}")
        model = _dc_from_dict(ModelConfig, {**m, "ssr": ssr, "lipschitz": lip, "fsd": fsd}, "model",
                              skip=())

        t = d.get("train", {})
        if not isinstance(t, dict):
            raise ConfigError("train must be an object")
        t = dict(t)
        if "bands" in d:
            if "bands" in t and t["bands"] != d["bands"]:
                raise ConfigError("bands given twice with different values")
            t["bands"] = d["bands"]
        train = _dc_from_dict(TrainConfig, t, "train")

        out_dir = d.get("output_dir", cls.output_dir)
        if not isinstance(out_dir, str):
            raise ConfigError("output_dir must be a string")
        cfg = cls(noise, data, model, train, out_dir)

        toggles = d.get("toggles", {})
        if not isinstance(toggles, dict):
            raise ConfigError("toggles must be an object")
        bad = set(toggles) - set(TOGGLES)
        if bad:
            raise ConfigError(f"unknown toggles: {sorted(bad)}")
        if any(not isinstance(v, bool) for v in toggles.values()):
            raise ConfigError("toggle values must be true or false")
        return cfg.with_toggles(**toggles)

    def to_dict(self) -> dict:
        m = self.model
        model = _dc_to_dict(m, skip=("ssr", "lipschitz", "fsd"))
        model["ssr"] = _dc_to_dict(m.ssr, skip=("enabled",))
        model["lipschitz"] = _dc_to_dict(m.lipschitz, skip=("enabled",))
        model["fsd"] = _dc_to_dict(m.fsd, skip=("enabled",))
        train = _dc_to_dict(self.train, skip=("bands",))
        return {
            "noise": self.noise.to_dict(),
            "data": _dc_to_dict(self.data),
            "model": model,
            "train": train,
            "bands": self.train.bands,
            "output_dir": self.output_dir,
            "toggles": self.toggles,
        }

    def canonical_json(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def resolved_output_dir(self, override: Optional[str] = None) -> Path:
        """``override`` (CLI), then the environment variable, then the config."""
        return Path(override or os.environ.get(OUTPUT_ENV) or self.output_dir)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: line {e.lineno} col {e.colno}: {e.msg}") from e
    return ExperimentConfig.from_dict(raw)
