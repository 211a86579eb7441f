"""Plain-text ``key = value`` config files with ``[section]`` headers.

``configparser`` is not used because every validation error, including
unknown keys and bad values found after parsing, must name its line.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Callable

from .augment import AugmentationConfig
from .errors import InvalidConfigError
from .experiments import ExperimentConfig
from .geo import CONTINENTS
from .synth import DEFAULT_CONTINENTS, ContinentSpec, SynthConfig


class ConfigError(InvalidConfigError):
    def __init__(self, source: str, lineno: int | None, message: str):
        where = f"{source}:{lineno}" if lineno else source
        super().__init__(f"{where}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Entry:
    value: str
    lineno: int


@dataclass
class ConfigFile:
    source: str
    sections: dict[str, dict[str, Entry]]
    section_lines: dict[str, int]
    sha256: str

    def error(self, lineno: int | None, message: str) -> ConfigError:
        return ConfigError(self.source, lineno, message)


_SECTION = re.compile(r"^\[([A-Za-z0-9_.\-]+)\]$")
_ENTRY = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


def parse_config(text: str, source: str = "<config>") -> ConfigFile:
    sections: dict[str, dict[str, Entry]] = {}
    lines: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1)
            if current in sections:
                raise ConfigError(source, lineno, f"duplicate section [{current}]")
            sections[current] = {}
            lines[current] = lineno
            continue
        m = _ENTRY.match(line)
        if not m:
            raise ConfigError(source, lineno, f"expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(source, lineno, "key outside of any [section]")
        key, value = m.group(1), m.group(2).strip()
        if key in sections[current]:
            raise ConfigError(source, lineno, f"duplicate key {key!r} in [{current}]")
        sections[current][key] = Entry(value, lineno)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return ConfigFile(source, sections, lines, digest)


def read_config(path) -> ConfigFile:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


# value converters


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_str(text: str) -> str | None:
    return None if text.lower() in ("", "none") else text


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


Schema = dict[str, Callable[[str], object]]

SYNTH_SCHEMA: Schema = {
    "n_cities": int, "image_size": int, "night_gain": float, "day_gain": float,
    "luminance_noise": float, "pixel_noise": float, "urban_fraction": float,
    "mode_gap": float, "country_spread": float, "night_base": float,
    "day_base": _floats, "jitter": _bool, "seed": int,
}
CONTINENT_SCHEMA: Schema = {
    "countries": int, "wealth_mean": float, "wealth_spread": float, "render_offset": float,
}
TRAIN_SCHEMA: Schema = {
    "modality": str, "learning_rate": float, "momentum": float, "epochs": int,
    "batch_size": int, "hidden_dims": _ints, "train_size": int, "seed": int,
}
AUGMENT_SCHEMA: Schema = {
    "enable_flip": _bool, "enable_rot90": _bool, "enable_noise": _bool,
    "noise_sigma": float, "apply_probability": float,
}
EXPERIMENT_SCHEMA: Schema = {
    "name": str, "modality": str, "train_size": int, "test_size": int,
    "augmentation": _bool, "train_continent": _optional_str, "test_continent": _optional_str,
    "seed": int,
}


def typed_section(cfg: ConfigFile, section: str, schema: Schema, required=()) -> dict[str, object]:
    entries = cfg.sections.get(section, {})
    out = {}
    for key, entry in entries.items():
        if key not in schema:
            raise cfg.error(entry.lineno, f"unknown key {key!r} in [{section}]")
        try:
            out[key] = schema[key](entry.value)
        except ValueError as exc:
            raise cfg.error(entry.lineno, f"bad value for {key}: {exc}") from None
    for key in required:
        if key not in out:
            raise cfg.error(cfg.section_lines.get(section), f"missing required key {key!r} in [{section}]")
    return out


def _check_sections(cfg: ConfigFile, allowed: Callable[[str], bool]) -> None:
    for name, lineno in cfg.section_lines.items():
        if not allowed(name):
            raise cfg.error(lineno, f"unknown section [{name}]")


def _build(cfg: ConfigFile, section: str, factory, kwargs):
    try:
        return factory(**kwargs)
    except InvalidConfigError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise cfg.error(cfg.section_lines.get(section), str(exc)) from None


def synth_config(cfg: ConfigFile) -> SynthConfig:
    _check_sections(cfg, lambda s: s == "synth" or s.startswith("continent."))
    if "synth" not in cfg.sections:
        raise cfg.error(None, "missing [synth] section")
    kwargs = typed_section(cfg, "synth", SYNTH_SCHEMA, required=("n_cities",))
    continents = []
    for name in cfg.sections:
        if name.startswith("continent."):
            fields = typed_section(cfg, name, CONTINENT_SCHEMA)
            if name.split(".", 1)[1] not in CONTINENTS:
                raise cfg.error(cfg.section_lines[name], f"unknown continent in [{name}]; choose from {CONTINENTS}")
            continents.append(_build(cfg, name, ContinentSpec, {"name": name.split(".", 1)[1], **fields}))
    kwargs["continents"] = tuple(continents) if continents else DEFAULT_CONTINENTS
    return _build(cfg, "synth", SynthConfig, kwargs)


def augmentation_config(cfg: ConfigFile, seed: int) -> AugmentationConfig | None:
    if "augment" not in cfg.sections:
        return None
    fields = typed_section(cfg, "augment", AUGMENT_SCHEMA)
    return _build(cfg, "augment", AugmentationConfig, {**fields, "seed": seed})


def train_section(cfg: ConfigFile) -> dict[str, object]:
    _check_sections(cfg, lambda s: s in ("train", "augment"))
    return typed_section(cfg, "train", TRAIN_SCHEMA)


def experiment_config(cfg: ConfigFile, seed: int | None = None) -> ExperimentConfig:
    """[experiment] fields; [train] keys become overrides, [augment] keys too."""
    _check_sections(cfg, lambda s: s in ("experiment", "train", "augment"))
    if "experiment" not in cfg.sections:
        raise cfg.error(None, "missing [experiment] section")
    kwargs = typed_section(cfg, "experiment", EXPERIMENT_SCHEMA, required=("name",))
    train = typed_section(cfg, "train", TRAIN_SCHEMA)
    for key in ("modality", "train_size", "seed"):
        if key in train:
            entry = cfg.sections["train"][key]
            raise cfg.error(entry.lineno, f"{key!r} belongs in [experiment] for experiment configs")
    aug = typed_section(cfg, "augment", AUGMENT_SCHEMA)
    if seed is not None:
        kwargs["seed"] = seed
    return _build(cfg, "experiment", ExperimentConfig,
                  {**kwargs, "train_overrides": train, "augment_overrides": aug})
