"""Run configuration: one strict JSON object covering paths, model,
training, and decoding. Unknown keys are rejected at every level so a
typo fails fast instead of silently training with a default, and every
saved config carries all fields so artifacts are self-describing."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace

from .decoding import DecodeConfig
from .errors import ConfigError
from .model import ModelConfig
from .training import TrainConfig

TOP_LEVEL_KEYS = {"paths", "model", "train", "decode"}


@dataclass(frozen=True)
class Paths:
    """Filesystem locations a run reads and writes.

    data_dir holds canonical per-language TSVs plus the ingest
    manifest; split_manifest points at a partition output; checkpoints
    are read from checkpoint_in and written under out_dir.
    """

    data_dir: str | None = None
    split_manifest: str | None = None
    checkpoint_in: str | None = None
    out_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "Paths":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown paths keys: {sorted(unknown)}")
        for key, value in d.items():
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"paths.{key} must be a string or null")
        return cls(**d)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    decode: DecodeConfig
    paths: Paths

    @classmethod
    def default(cls) -> "RunConfig":
        return cls(model=ModelConfig(), train=TrainConfig(), decode=DecodeConfig(),
                   paths=Paths())

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"run config must be a JSON object, got {type(data).__name__}")
        unknown = set(data) - TOP_LEVEL_KEYS
        if unknown:
            raise ConfigError(f"unknown run config sections: {sorted(unknown)}")
        for section in TOP_LEVEL_KEYS:
            if section in data and not isinstance(data[section], dict):
                raise ConfigError(f"section {section!r} must be a JSON object")
        model = ModelConfig.from_dict(data.get("model", {}))
        train = TrainConfig.from_dict(data.get("train", {}))
        paths = Paths.from_dict(data.get("paths", {}))
        decode_raw = dict(data.get("decode", {}))
        unknown = set(decode_raw) - {"beam_size", "max_len", "length_penalty"}
        if unknown:
            raise ConfigError(f"unknown decode config keys: {sorted(unknown)}")
        try:
            decode = DecodeConfig(**decode_raw)
        except TypeError as exc:
            raise ConfigError(f"bad decode config: {exc}") from exc
        return cls(model=model, train=train, decode=decode, paths=paths)

    def to_dict(self) -> dict:
        return {
            "paths": self.paths.to_dict(),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "decode": {
                "beam_size": self.decode.beam_size,
                "max_len": self.decode.max_len,
                "length_penalty": self.decode.length_penalty,
            },
        }


def load_run_config(path: str | None) -> RunConfig:
    """Parse a JSON run config file; None means all defaults."""
    if path is None:
        return RunConfig.default()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)


def materialize(run: RunConfig, *, n_languages: int) -> RunConfig:
    """Resolve data-dependent settings before a training run.

    Wildcard tag masking only has meaning when several languages share
    the model, so single-language runs get unk_mask_rate 0.
    """
    if n_languages < 1:
        raise ConfigError("need at least one language")
    if n_languages == 1 and run.train.unk_mask_rate > 0:
        return replace(run, train=replace(run.train, unk_mask_rate=0.0))
    return run
