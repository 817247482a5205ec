"""Run configuration: JSON file + command-line overrides, validated against a schema."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from .characterize import CharacterizeConfig
from .chargemap import ChargeMapConfig
from .device import DeviceLayout
from .tuner import TunerConfig

DEFAULT_COUNT_PER_CLASS = 2000


class ConfigError(ValueError):
    """Raised for any invalid configuration; the CLI maps it to exit code 1."""


def load_schema() -> dict:
    with resources.files("qdtune").joinpath("config.schema.json").open() as fh:
        return json.load(fh)


@dataclass
class RunConfig:
    """Validated run configuration.

    ``raw`` keeps the sections as given in the file; helper methods build the
    typed configuration objects used by the library, so a bad value surfaces
    here as a ``ConfigError`` rather than halfway through a run.
    """

    raw: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "qdtune-out"
    workers: int = 1
    path: str | None = None

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    def _dir(self, section: str, default: str) -> str:
        d = self.section(section).get("dir")
        if d is None:
            return os.path.join(self.out, default)
        # relative paths in a config file are taken relative to that file
        if self.path and not os.path.isabs(d):
            return os.path.join(os.path.dirname(os.path.abspath(self.path)), d)
        return d

    @property
    def datasets_dir(self) -> str:
        return self._dir("datasets", "datasets")

    @property
    def models_dir(self) -> str:
        return self._dir("models", "models")

    def layout(self) -> DeviceLayout | None:
        s = self.section("layout")
        if not s:
            return None
        kw = {}
        if "safety" in s:
            kw["safety"] = {g: tuple(r) for g, r in s["safety"].items()}
        if "noise_floor" in s:
            kw["noise_floor"] = s["noise_floor"]
        return DeviceLayout(**kw)

    def characterize(self) -> CharacterizeConfig:
        return CharacterizeConfig(**self.section("characterize"))

    def tuner(self) -> TunerConfig:
        s = self.section("tuner")
        if "delta_clamp" in s:
            s["delta_clamp"] = tuple(s["delta_clamp"])
        return TunerConfig(**s)

    def chargemap(self) -> ChargeMapConfig:
        s = self.section("chargemap")
        if "current_window" in s:
            s["current_window"] = tuple(s["current_window"])
        return ChargeMapConfig(**s)

    def build_all(self) -> None:
        """Construct every typed section once to surface value errors early."""
        try:
            self.layout()
            self.characterize()
            self.tuner()
            self.chargemap()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def validate(doc) -> None:
    try:
        jsonschema.validate(doc, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None


def load_config(path=None, seed=None, out=None, workers=None) -> RunConfig:
    """Read, validate and merge a config file with explicit overrides."""
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    validate(doc)
    cfg = RunConfig(
        raw=doc,
        seed=int(doc.get("seed", 0)) if seed is None else int(seed),
        out=doc.get("out", "qdtune-out") if out is None else out,
        workers=int(doc.get("workers", 1)) if workers is None else int(workers),
        path=path,
    )
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    cfg.build_all()
    return cfg
