"""Experiment manifests: one ``key=value`` pair per line.

Keys are the evolution settings, the overridable domain settings and the
two paths ``environment`` (empty for the built-in arenas) and
``output_dir``.  Unknown keys are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..domains.config import DomainConfig, default_config
from ..evolve import EvolutionConfig
from ..substrate import ConfigurationError

# DomainConfig fields a manifest may override (the rest follow from the domain and method)
DOMAIN_KEYS = ("seconds", "steps_per_second", "forward_speed", "turn_rate", "ray_span_degrees",
               "max_range", "waypoint_radius", "stop_distance")
PATH_KEYS = ("environment", "output_dir")


def _evolution_types():
    return {f.name: f.type for f in fields(EvolutionConfig)}


class ManifestError(ConfigurationError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class ExperimentManifest:
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    domain: dict = field(default_factory=dict)
    environment: str = ""
    output_dir: str = "run"

    def domain_config(self) -> DomainConfig:
        return default_config(self.evolution.domain).with_(**self.domain)

    def validate(self) -> "ExperimentManifest":
        self.evolution.validate()
        for k, v in self.domain.items():
            if k not in DOMAIN_KEYS:
                raise ManifestError(f"unknown domain setting {k!r}", k)
            if not (isinstance(v, (int, float)) and math.isfinite(v)) or v < 0:
                raise ManifestError(f"{k}: must be a non-negative number, got {v!r}", k)
            if k in ("seconds", "steps_per_second", "forward_speed", "max_range") and v <= 0:
                raise ManifestError(f"{k}: must be positive, got {v!r}", k)
        return self

    def as_items(self) -> list[tuple[str, object]]:
        items = [(f.name, getattr(self.evolution, f.name)) for f in fields(EvolutionConfig)]
        items += [(k, self.domain[k]) for k in DOMAIN_KEYS if k in self.domain]
        items += [("environment", self.environment), ("output_dir", self.output_dir)]
        return items


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dumps(manifest: ExperimentManifest) -> str:
    return "".join(f"{k}={_format(v)}\n" for k, v in manifest.as_items())


def _key_type(key: str):
    types = _evolution_types()
    if key in types:
        return types[key]
    if key in ("steps_per_second",):
        return "int"
    if key in DOMAIN_KEYS:
        return "float"
    if key in PATH_KEYS:
        return "str"
    return None


def parse_value(key: str, text: str):
    """Convert the text of ``key`` to its typed value."""
    kind = _key_type(key)
    if kind is None:
        raise ManifestError(f"unknown key {key!r}", key)
    text = text.strip()
    kind = str(kind)
    try:
        if "None" in kind and text.lower() in ("none", ""):
            return None
        if kind.startswith("bool"):
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise ManifestError(f"{key}: cannot parse {text!r} as {kind.split(' ')[0]}", key) from None


def from_values(values: dict) -> ExperimentManifest:
    evo = {k: v for k, v in values.items() if k in _evolution_types()}
    dom = {k: v for k, v in values.items() if k in DOMAIN_KEYS}
    unknown = [k for k in values if k not in evo and k not in dom and k not in PATH_KEYS]
    if unknown:
        raise ManifestError(f"unknown key {unknown[0]!r}", unknown[0])
    try:
        evolution = EvolutionConfig(**evo)
    except TypeError as exc:
        raise ManifestError(str(exc)) from None
    return ExperimentManifest(evolution, dom, values.get("environment", ""),
                              values.get("output_dir", "run"))


def loads(text: str) -> ExperimentManifest:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ManifestError(f"expected key=value, got {line!r}", line=lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        if key in values:
            raise ManifestError(f"duplicate key {key!r}", key, lineno)
        try:
            values[key] = parse_value(key, value)
        except ManifestError as exc:
            raise ManifestError(str(exc), key, lineno) from None
    return from_values(values)


def load(path) -> ExperimentManifest:
    return loads(Path(path).read_text())


def save(manifest: ExperimentManifest, path) -> None:
    Path(path).write_text(dumps(manifest))
