"""JSON run configuration: schema, profiles and resolution to domain objects."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, replace
from pathlib import Path

import jsonschema

from .lattice import CoreGeometry, make_geometry
from .loss import LossSpec
from .oracle import DIRECTIONAL_MODES, OracleConfig
from .train import OptimizerConfig, TrainConfig


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_count = {"type": "integer", "minimum": 1}
_bool = {"type": "boolean"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "width": _count,
                "height": _count,
                "levels": _count,
                "mask": {
                    "oneOf": [
                        {"enum": ["full", "agr_like"]},
                        {
                            "type": "object",
                            "required": ["kind", "radius"],
                            "additionalProperties": False,
                            "properties": {
                                "kind": {"const": "disk"},
                                "radius": {"type": "number", "exclusiveMinimum": 0},
                            },
                        },
                    ]
                },
            },
        },
        "oracle": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "baseline": _num,
                "radial_scale": {"type": "number", "exclusiveMinimum": 0},
                "directional_mode": {"enum": list(DIRECTIONAL_MODES)},
                "break_weight": {"type": "number", "minimum": 0},
                "noise_std": {"type": "number", "minimum": 0},
                "seed": {"type": "integer"},
            },
        },
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_train": {"type": "integer", "minimum": 2},
                "n_test": {"type": "integer", "minimum": 2},
                "fraction_range": {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0, "maximum": 1},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "seed": {"type": "integer"},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "optimizer": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["adam", "sgd"]},
                        "lr": {"type": "number", "exclusiveMinimum": 0},
                        "beta1": _num,
                        "beta2": _num,
                        "eps": _num,
                        "momentum": {"type": "number", "minimum": 0},
                    },
                },
                "batch_size": _count,
                "max_epochs": {"type": "integer", "minimum": 0},
                "patience": {"type": "integer", "minimum": 0},
                "min_delta": {"type": "number", "minimum": 0},
                "val_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "huber_delta": {"type": "number", "exclusiveMinimum": 0},
                "mode_bins": _count,
                "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "floor_one": _bool,
                "batch_beta": _bool,
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer"},
                "repeats": {"type": ["integer", "null"], "minimum": 1},
                "transfer_repeats": {"type": ["integer", "null"], "minimum": 1},
                "workers": _count,
                "max_failed_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                "pretrained_models": _count,
            },
        },
        "validation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"instances": _count, "tolerance": {"type": "number", "minimum": 0}},
        },
        "experiments": {
            "type": "object",
            "patternProperties": {
                r"^E\d\.\d$": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "repeats": _count,
                        "loss": {
                            "type": "object",
                            "additionalProperties": False,
                            "properties": {
                                "alpha": {"type": "number", "exclusiveMinimum": 0},
                                "squared": _bool,
                                "take_mean": _bool,
                                "floor_one": _bool,
                                "batch_beta": _bool,
                                "delta": {"type": "number", "exclusiveMinimum": 0},
                                "mu": _num,
                                "sigma": {"type": "number", "exclusiveMinimum": 0},
                            },
                        },
                    },
                }
            },
            "additionalProperties": False,
        },
    },
}

DESK = {
    "geometry": {"width": 20, "height": 20, "levels": 3, "mask": "agr_like"},
    "oracle": {
        "baseline": 0.0,
        "radial_scale": 2.0,
        "directional_mode": "none",
        "break_weight": 0.0,
        "noise_std": 0.5,
        "seed": 0,
    },
    "dataset": {"n_train": 2000, "n_test": 500, "fraction_range": [0.15, 0.25], "seed": 0},
    "train": {
        "optimizer": {"kind": "adam", "lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "momentum": 0.0},
        "batch_size": 32,
        "max_epochs": 100,
        "patience": 10,
        "min_delta": 1e-5,
        "val_fraction": 0.1,
        "huber_delta": 1.0,
        "mode_bins": 50,
        "dropout": 0.2,
        "floor_one": True,
        "batch_beta": False,
    },
    "run": {
        "seed": 0,
        "repeats": 4,
        "transfer_repeats": 2,
        "workers": 1,
        "max_failed_fraction": 0.25,
        "pretrained_models": 5,
    },
    "validation": {"instances": 2, "tolerance": 1e-9},
    "experiments": {},
}

FULL_SCALE_OVERRIDES = {
    "dataset": {"n_train": 6136, "n_test": 2000},
    "run": {"repeats": None, "transfer_repeats": None},
}

PROFILES = ("desk", "paper")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "experiments":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(f"{_path(err)}: {err.message}")
    lo, hi = raw.get("dataset", {}).get("fraction_range", [0, 1])
    if lo > hi:
        raise ConfigError("dataset.fraction_range: lo > hi")


@dataclass
class RunConfig:
    raw: dict
    profile: str

    @property
    def geometry(self) -> CoreGeometry:
        g = self.raw["geometry"]
        return make_geometry(g["width"], g["height"], g["levels"], g["mask"])

    @property
    def oracle(self) -> OracleConfig:
        return OracleConfig(**self.raw["oracle"])

    @property
    def dataset(self) -> dict:
        return self.raw["dataset"]

    @property
    def run(self) -> dict:
        return self.raw["run"]

    @property
    def dropout(self) -> float:
        return self.raw["train"]["dropout"]

    def train_config(self, loss: LossSpec) -> TrainConfig:
        t = self.raw["train"]
        return TrainConfig(
            optimizer=OptimizerConfig(**t["optimizer"]),
            batch_size=t["batch_size"],
            max_epochs=t["max_epochs"],
            patience=t["patience"],
            min_delta=t["min_delta"],
            val_fraction=t["val_fraction"],
            loss=loss,
            mode_bins=t["mode_bins"],
            seed=self.run["seed"],
        )

    def resolve_loss(self, eid: str, loss: LossSpec) -> LossSpec:
        """Apply train-level loss defaults, then per-experiment overrides."""
        t = self.raw["train"]
        if loss.kind == "huber":
            loss = replace(loss, delta=t["huber_delta"])
        elif loss.kind == "weighted":
            loss = replace(loss, floor_one=t["floor_one"], batch_beta=t["batch_beta"])
        override = self.raw["experiments"].get(eid, {}).get("loss", {})
        return replace(loss, **override) if override else loss

    def repeats_for(self, eid: str, registry_repeats: int, transfer: bool) -> int:
        override = self.raw["experiments"].get(eid, {}).get("repeats")
        if override:
            return override
        key = "transfer_repeats" if transfer else "repeats"
        return self.run.get(key) or registry_repeats

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)


def load_config(path=None, profile: str = "desk", overrides: dict | None = None) -> RunConfig:
    if profile not in PROFILES:
        raise ConfigError(f"profile must be one of {PROFILES}")
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("<root>: config must be a JSON object")
        validate(user)
    base = DESK if profile == "desk" else _merge(DESK, FULL_SCALE_OVERRIDES)
    raw = _merge(base, user)
    if overrides:
        raw = _merge(raw, overrides)
    validate(raw)
    try:
        cfg = RunConfig(raw, profile)
        cfg.geometry
        cfg.oracle
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg
