"""
run_config.py — JSON run configuration
========================================
Pydantic v2 models for the files passed to `cli_app --config`, plus
builders turning them into levy_core / integral_map objects.

Example:
    {
      "schema_version": 1,
      "law": {"family": "gaussian", "params": {"variance": 1.0}},
      "mappings": [{"named": "kexp"}, {"named": "lmap"}],
      "grid": {"min": -10, "max": 10, "count": 201},
      "seed": 20140501,
      "n_paths": 200000
    }

Validation failures become ConfigError with a dotted field path
("law.family", "mappings.0.kernel.form").
"""

import json
import logging
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import (
    DEFAULT_PATHS, DEFAULT_SEED, GRID_COUNT, GRID_MAX, GRID_MIN, OUTPUT_DIR,
    SCHEMA_VERSION, parse_grid,
)
from errors import ConfigError, InvalidParameterError
from integral_map import MappingSpec
from levy_core import LAW_FAMILIES, LevyTriple, make_law
from mapping_catalog import named_mapping
from measure_alg import KERNEL_FORMS, TIME_CHANGE_FORMS, KernelFunction, TimeChange

logger = logging.getLogger(__name__)

LawFamily = Literal[LAW_FAMILIES]
KernelForm = Literal[KERNEL_FORMS + ("negated",)]
TimeChangeForm = Literal[tuple(TIME_CHANGE_FORMS) + ("tabulated",)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ─── Parts ───────────────────────────────────────────────────────────────────

class LawConfig(_Strict):
    family: LawFamily
    params: dict[str, Any] = Field(default_factory=dict)


class KernelConfig(_Strict):
    form:   KernelForm
    scale:  float = 1.0
    params: dict[str, float] = Field(default_factory=dict)
    t:      list[float] | None = None
    values: list[float] | None = None

    @model_validator(mode="after")
    def _table_present(self):
        if self.form == "tabulated" and (self.t is None or self.values is None):
            raise ValueError("tabulated kernel needs 't' and 'values'")
        return self


class TimeChangeConfig(_Strict):
    form:     TimeChangeForm
    interval: tuple[float, float] | None = None
    scale:    float = Field(1.0, gt=0)
    params:   dict[str, float] = Field(default_factory=dict)
    t:        list[float] | None = None
    values:   list[float] | None = None

    @model_validator(mode="after")
    def _table_present(self):
        if self.form == "tabulated" and (self.t is None or self.values is None):
            raise ValueError("tabulated time change needs 't' and 'values'")
        return self


class MappingConfig(_Strict):
    """Either a catalog name (with β / α as `param`) or an explicit kernel + time change."""
    named:        str | None = None
    param:        float | None = None
    kernel:       KernelConfig | None = None
    time_change:  TimeChangeConfig | None = None
    negate_input: bool = False
    name:         str = ""

    @model_validator(mode="after")
    def _one_way(self):
        explicit = self.kernel is not None and self.time_change is not None
        if (self.named is None) == (not explicit):
            raise ValueError("give either 'named' or both 'kernel' and 'time_change'")
        return self


class GridConfig(_Strict):
    min:   float = GRID_MIN
    max:   float = GRID_MAX
    count: int = Field(GRID_COUNT, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.max < self.min:
            raise ValueError("max must be ≥ min")
        return self

    def array(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.count)


class SimulationConfig(_Strict):
    level:      int = Field(0, ge=0)
    levels:     list[int] | None = None
    band:       Literal["simple", "clt"] = "simple"
    truncation: float | None = Field(None, gt=0)
    threads:    int | None = Field(None, ge=1)


# ─── Root ────────────────────────────────────────────────────────────────────

class RunConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    law:            LawConfig | None = None
    mappings:       list[MappingConfig] = Field(default_factory=list)
    grid:           GridConfig = Field(default_factory=GridConfig)
    method:         Literal["auto", "quadrature"] = "auto"
    tolerance:      float | None = Field(None, gt=0)   # None: per-suite tolerances
    seed:           int = DEFAULT_SEED
    n_paths:        int = Field(DEFAULT_PATHS, ge=1)
    suite:          str = "all"
    closed_form:    bool = True
    out_dir:        Path = OUTPUT_DIR
    simulation:     SimulationConfig = Field(default_factory=SimulationConfig)

    @field_validator("schema_version")
    @classmethod
    def _known_version(cls, v: int) -> int:
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {v}; expected {SCHEMA_VERSION}")
        return v


# ══════════════════════════════════════════════════════════════════════════════
#  Loading
# ══════════════════════════════════════════════════════════════════════════════

def _field_path(exc: ValidationError) -> tuple[str, str]:
    err = exc.errors()[0]
    loc = [str(p) for p in err["loc"]]
    return ".".join(loc), err["msg"]


def load_config(path: Path | None = None, **overrides) -> RunConfig:
    """Read a JSON config (optional) and apply non-None overrides on top."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found", field_path="config") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", field_path="config") from exc
        if not isinstance(data, dict):
            raise ConfigError("top level must be a JSON object", field_path="config")

    for key, value in overrides.items():
        if value is None:
            continue
        if key == "grid" and isinstance(value, str):
            try:
                lo, hi, count = parse_grid(value)
            except ValueError as exc:
                raise ConfigError(str(exc), field_path="grid") from exc
            value = {"min": lo, "max": hi, "count": count}
        data[key] = value

    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        where, msg = _field_path(exc)
        raise ConfigError(msg, field_path=where) from exc
    logger.debug("config loaded from %s: %s", path or "<defaults>", cfg.model_dump(mode="json"))
    return cfg


# ══════════════════════════════════════════════════════════════════════════════
#  Builders
# ══════════════════════════════════════════════════════════════════════════════

def build_law(cfg: RunConfig) -> LevyTriple:
    if cfg.law is None:
        raise ConfigError("this command needs a law", field_path="law")
    try:
        return make_law(cfg.law.family, **cfg.law.params)
    except (InvalidParameterError, TypeError) as exc:
        raise ConfigError(str(exc), field_path="law.params") from exc


def _build_kernel(k: KernelConfig) -> KernelFunction:
    if k.form == "tabulated":
        base = KernelFunction.tabulated(k.t, k.values)
        return base.scaled(k.scale) if k.scale != 1.0 else base
    return KernelFunction.of(k.form, scale=k.scale, **k.params)


def _build_time_change(r: TimeChangeConfig) -> TimeChange:
    if r.form == "tabulated":
        base = TimeChange.tabulated(r.t, r.values)
        return base.scaled(r.scale) if r.scale != 1.0 else base
    return TimeChange.of(r.form, interval=r.interval, scale=r.scale, **r.params)


def build_mapping(m: MappingConfig, index: int = 0) -> MappingSpec:
    where = f"mappings.{index}"
    try:
        if m.named is not None:
            spec = named_mapping(m.named, m.param)
            if m.negate_input:
                spec = MappingSpec(spec.kernel, spec.time_change, not spec.negate_input, spec.name)
            return spec
        return MappingSpec(kernel=_build_kernel(m.kernel), time_change=_build_time_change(m.time_change),
                           negate_input=m.negate_input, name=m.name)
    except ConfigError as exc:
        tail = exc.field_path.rsplit(".", 1)[-1]
        raise ConfigError(exc.message, field_path=f"{where}.{tail}") from exc
    except InvalidParameterError as exc:
        raise ConfigError(str(exc), field_path=where) from exc


def build_mappings(cfg: RunConfig) -> list[MappingSpec]:
    return [build_mapping(m, i) for i, m in enumerate(cfg.mappings)]
