"""Run configuration: a versioned JSON document checked against ``CONFIG_SCHEMA``.

``python -m nats.config`` prints the schema.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema

SCHEMA_VERSION = 1

_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}
_vector = {"type": "array", "items": _number, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "nats run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "model"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "model": {"enum": ["bosonic", "qubit-demo", "custom-matrices"]},
        "method": {"enum": ["ycov", "sld", "fd", "all"]},
        "output": {"type": "string"},
        "parameters": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                # bosonic
                "beta": _positive,
                "r": _number,
                "mu": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
                "omega": _positive,
                "gtau": _number,
                "fock_dim": {"type": "integer", "minimum": 2, "maximum": 120},
                "frame": {"enum": ["squeezed", "lab"]},
                "include_q3": {"type": "boolean"},
                "delta_beta": _number,
                "delta_mu": _number,
                "beta2": _positive,
                "r2": _number,
                # qubit-demo
                "theta": _number,
                "axes": {"type": "string", "pattern": "^[xyz]{1,3}$"},
                # qubit-demo and custom-matrices
                "affinities": _vector,
                "affinities2": _vector,
                "matrices": {"type": "string"},
                # shared
                "delta_lambda": _vector,
                "collisions": {"type": "integer", "minimum": 1, "maximum": 100000},
                "fd_step": _positive,
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta": {"type": "array", "items": _positive, "minItems": 1},
                "r": {"type": "array", "items": _number, "minItems": 1},
                "source": {"enum": ["closed-form", "numeric"]},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "charge_preservation": _positive,
                "leakage": _positive,
                "verify": _positive,
            },
        },
    },
}


class ConfigError(ValueError):
    """The configuration file is unreadable or violates the schema."""


@dataclass(frozen=True)
class RunConfig:
    model: str
    method: str
    output: str | None
    parameters: dict
    sweep: dict
    tolerances: dict
    source: Path | None = None

    def param(self, key, default=None):
        return self.parameters.get(key, default)

    def resolve(self, path: str) -> Path:
        """Paths inside the config are relative to the config file."""
        p = Path(path)
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p


def validate_config(doc: dict) -> None:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    params = doc.get("parameters", {})
    if "r" in params and "mu" in params:
        raise ConfigError("give either r or mu, not both")
    for key in ("r", "r2", "gtau", "theta", "delta_beta", "delta_mu"):
        if key in params and not math.isfinite(params[key]):
            raise ConfigError(f"parameter {key} must be finite")


def parse_config(doc: dict, source: Path | None = None) -> RunConfig:
    validate_config(doc)
    return RunConfig(
        model=doc["model"],
        method=doc.get("method", "ycov"),
        output=doc.get("output"),
        parameters=dict(doc.get("parameters", {})),
        sweep=dict(doc.get("sweep", {})),
        tolerances=dict(doc.get("tolerances", {})),
        source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(doc, source=path)


if __name__ == "__main__":
    print(json.dumps(CONFIG_SCHEMA, indent=2))
