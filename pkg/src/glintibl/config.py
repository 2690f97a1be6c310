"""Render configuration: INI sections, environment-variable and command-line overrides.

Precedence, lowest first: dataclass defaults, the config file, variables
named ``GLINTIBL_<SECTION>_<KEY>``, then ``--section-key value`` flags.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

ENV_PREFIX = "GLINTIBL_"


class ConfigError(ValueError):
    pass


@dataclass
class SceneSection:
    geometry: str = "sphere"
    width: int = 128
    height: int = 128
    fov: float = 45.0
    camera_position: tuple = (0.0, 0.0, 3.0)
    look_at: tuple = (0.0, 0.0, 0.0)
    env_rotation: float = 0.0
    uv_scale: float = 0.13


@dataclass
class MaterialSection:
    sqrt_alpha: float = 0.4
    f0: tuple = (1.0, 1.0, 1.0)
    log_n0: float = 14.0
    density_scale: float = 1.0


@dataclass
class EnvmapSection:
    path: str = ""
    synthetic: str = "three_region"
    k: int = 8
    clip_floor: float = 1e-3
    space: str = "linear"
    mip_count: int = 7
    samples: int = 1024
    quantize: bool = False
    cache: str = ""


@dataclass
class ModeSection:
    kind: str = "glint"
    gamma: float = 3.0
    realizations: int = 1


@dataclass
class SeedSection:
    value: int = 0


@dataclass
class OutputSection:
    path: str = "render"
    exposure: float = 0.0
    formats: tuple = ("png", "pfm")


@dataclass
class RenderConfig:
    scene: SceneSection = field(default_factory=SceneSection)
    material: MaterialSection = field(default_factory=MaterialSection)
    envmap: EnvmapSection = field(default_factory=EnvmapSection)
    mode: ModeSection = field(default_factory=ModeSection)
    seed: SeedSection = field(default_factory=SeedSection)
    output: OutputSection = field(default_factory=OutputSection)

    def sections(self):
        return [(f.name, getattr(self, f.name)) for f in dataclasses.fields(self)]

    def keys(self):
        for name, sec in self.sections():
            for f in dataclasses.fields(sec):
                yield name, f.name, getattr(sec, f.name)

    def set(self, section: str, key: str, raw: str) -> None:
        sec = getattr(self, section, None)
        if sec is None or not isinstance(sec, tuple(_SECTION_TYPES)):
            raise ConfigError(f"unknown config section [{section}]")
        if key not in {f.name for f in dataclasses.fields(sec)}:
            raise ConfigError(f"unknown config key {section}.{key}")
        current = getattr(sec, key)
        try:
            value = _parse(raw, current)
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from None
        setattr(sec, key, value)

    def dump(self) -> str:
        lines = []
        for name, sec in self.sections():
            lines.append(f"[{name}]")
            for f in dataclasses.fields(sec):
                lines.append(f"{f.name} = {_format(getattr(sec, f.name))}")
            lines.append("")
        return "\n".join(lines)


_SECTION_TYPES = (SceneSection, MaterialSection, EnvmapSection, ModeSection, SeedSection, OutputSection)


def _parse(raw: str, current):
    raw = raw.strip()
    if isinstance(current, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    if isinstance(current, int):
        return int(raw, 0)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if current and isinstance(current[0], float):
            vals = tuple(float(p) for p in parts)
            if len(vals) != len(current):
                raise ValueError(f"expected {len(current)} comma-separated numbers")
            return vals
        return tuple(parts)
    return raw


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def load_config(path=None, environ=None, overrides=None) -> RenderConfig:
    """Build a config from defaults, an optional INI file, env vars and explicit overrides.

    ``overrides`` maps ``(section, key)`` to raw string values.
    """
    cfg = RenderConfig()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg.set(section, key, raw)
    environ = os.environ if environ is None else environ
    for section, key, _ in list(cfg.keys()):
        name = f"{ENV_PREFIX}{section.upper()}_{key.upper()}"
        if name in environ:
            cfg.set(section, key, environ[name])
    for (section, key), raw in (overrides or {}).items():
        cfg.set(section, key, raw)
    return cfg


def flag_name(section: str, key: str) -> str:
    return f"--{section}-{key.replace('_', '-')}"
