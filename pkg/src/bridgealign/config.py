"""Run configuration: JSON with ``sim``, ``train``, ``eval`` and ``sweep`` sections."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List

import jsonschema

from .simulator import SimConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class EvalConfig:
    window: int = 4
    temperature: float = 0.1
    heldout_seed: int = 1007
    tracking_noise: List[float] = field(default_factory=lambda: [0.0, 0.01, 0.05])
    tracking_videos: int = 20
    config_id: str = "default"


@dataclass
class SweepConfig:
    deltas: List[float] = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
    frame_counts: List[int] = field(default_factory=lambda: [3, 5, 7])
    epochs: int | None = None


@dataclass
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def to_dict(self) -> dict:
        return asdict(self)


_TYPES = {int: "integer", float: "number", bool: "boolean", str: "string"}


def _section_schema(cls) -> dict:
    props = {}
    for f in fields(cls):
        default = getattr(cls(), f.name)
        if isinstance(default, list):
            item = _TYPES[type(default[0])] if default else "number"
            props[f.name] = {"type": "array", "items": {"type": item}, "minItems": 1}
        elif default is None:
            props[f.name] = {"type": ["integer", "null"], "minimum": 1}
        else:
            props[f.name] = {"type": _TYPES[type(default)]}
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA = {
    "type": "object",
    "properties": {
        "sim": _section_schema(SimConfig),
        "train": _section_schema(TrainConfig),
        "eval": _section_schema(EvalConfig),
        "sweep": _section_schema(SweepConfig),
    },
    "additionalProperties": False,
}
SCHEMA["properties"]["train"]["properties"]["optimizer"]["enum"] = ["sgd", "adam"]
SCHEMA["properties"]["train"]["properties"]["projector"]["enum"] = ["linear", "mlp"]
SCHEMA["properties"]["eval"]["properties"]["window"]["minimum"] = 2


def config_from_dict(data: dict) -> RunConfig:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from exc
    try:
        return RunConfig(
            sim=SimConfig(**data.get("sim", {})),
            train=TrainConfig(**data.get("train", {})),
            eval=EvalConfig(**data.get("eval", {})),
            sweep=SweepConfig(**data.get("sweep", {})),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)
