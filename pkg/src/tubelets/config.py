"""Pipeline configuration: a TOML file with one table per module, plus env overrides.

Every value has a default; unknown tables or keys are rejected.  An
environment variable ``TUBELETS_<TABLE>__<KEY>`` overrides a single key, its
value parsed as a TOML literal when possible (else taken as a string).
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .grouping import SELECTED, grouping_function
from .motion import RobustConfig
from .refine import RefineConfig
from .segmentation import SegmentationConfig
from .trajectories import TrackConfig

ENV_PREFIX = "TUBELETS_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IMotionConfig:
    se_radius: int = 2
    tau: int = 0


@dataclass(frozen=True)
class GroupingConfig:
    functions: tuple[str, ...] = SELECTED
    discard_min_size: int = 500

    def __post_init__(self):
        if not self.functions:
            raise ValueError("at least one grouping function is required")
        for name in self.functions:
            grouping_function(name)


@dataclass(frozen=True)
class EvalConfig:
    sigma: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    threads: int = 1

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    motion: RobustConfig = field(default_factory=RobustConfig)
    imotion: IMotionConfig = field(default_factory=IMotionConfig)
    segment_vid: SegmentationConfig = field(default_factory=SegmentationConfig)
    segment_imotion: SegmentationConfig = field(default_factory=SegmentationConfig)
    grouping: GroupingConfig = field(default_factory=GroupingConfig)
    track: TrackConfig = field(default_factory=TrackConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        out = {}
        for f in dataclasses.fields(self):
            sub = getattr(self, f.name)
            out[f.name] = {k: list(v) if isinstance(v, tuple) else v
                           for k, v in dataclasses.asdict(sub).items()}
        return out

    def replace(self, **sections: Mapping[str, Any]) -> "PipelineConfig":
        """Copy with some keys changed, e.g. ``cfg.replace(refine={"seed": 3})``."""
        return from_mapping(_merge(self.to_dict(), sections))


def _merge(base: dict, extra: Mapping) -> dict:
    out = {}
    for sec, kv in base.items():
        if not isinstance(kv, Mapping):
            raise ConfigError(f"config table [{sec}] must be a table")
        out[sec] = dict(kv)
    for sec, kv in extra.items():
        if not isinstance(kv, Mapping):
            raise ConfigError(f"config table [{sec}] must be a table")
        out.setdefault(sec, {}).update(kv)
    return out


def _coerce(cls, section: str, values: Mapping[str, Any]):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    kwargs = {}
    for k, v in values.items():
        kwargs[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in [{section}]: {exc}") from exc


def from_mapping(doc: Mapping[str, Any]) -> PipelineConfig:
    sections = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(doc) - set(sections))
    if unknown:
        raise ConfigError(f"unknown config table(s): {', '.join(unknown)}")
    kwargs = {}
    for name, f in sections.items():
        values = doc.get(name, {})
        if not isinstance(values, Mapping):
            raise ConfigError(f"config table [{name}] must be a table")
        kwargs[name] = _coerce(f.default_factory, name, values)
    return PipelineConfig(**kwargs)


def _parse_env_value(raw: str) -> Any:
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, dict[str, Any]]:
    environ = os.environ if environ is None else environ
    out: dict[str, dict[str, Any]] = {}
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        if "__" not in rest:
            raise ConfigError(f"environment override {name} must look like {ENV_PREFIX}TABLE__KEY")
        sec, key = rest.split("__", 1)
        sec = sec.lower()
        names = _field_names(sec)
        key = names.get(key.lower(), key.lower())
        out.setdefault(sec, {})[key] = _parse_env_value(raw)
    return out


def _field_names(section: str) -> dict[str, str]:
    for f in dataclasses.fields(PipelineConfig):
        if f.name == section:
            return {g.name.lower(): g.name for g in dataclasses.fields(f.default_factory)}
    return {}


def load_config(path: str | os.PathLike | None = None,
                environ: Mapping[str, str] | None = None) -> PipelineConfig:
    doc: dict = {}
    if path is not None:
        try:
            doc = tomllib.loads(Path(path).read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    return from_mapping(_merge(doc, env_overrides(environ)))


def dump_config(cfg: PipelineConfig) -> str:
    """TOML text that ``load_config`` reads back to an equal config."""
    lines = []
    for sec, kv in cfg.to_dict().items():
        lines.append(f"[{sec}]")
        for k, v in kv.items():
            if v is None:
                continue
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float) and v == float("inf"):
        return "inf"
    return repr(v)
