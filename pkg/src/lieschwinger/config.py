"""Versioned JSON run configuration."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(_Strict):
    kind: Literal["phi4", "spin", "custom"]
    N: int = Field(ge=2)
    d: Optional[int] = Field(default=None, ge=2)
    d_raw: int = Field(default=60, ge=2)
    spec_file: Optional[str] = None

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "phi4":
            if self.d is None:
                raise ValueError("phi4 models need d")
            if self.d > self.d_raw:
                raise ValueError("d must not exceed d_raw")
            if self.spec_file is not None:
                raise ValueError("spec_file is only used by spin/custom models")
        if self.kind == "custom" and self.spec_file is None:
            raise ValueError("custom models need spec_file")
        return self


class ToleranceConfig(_Strict):
    tol_series: float = Field(default=1e-12, gt=0)
    tol_offdiag: float = Field(default=1e-10, gt=0)
    tol_psd: float = Field(default=1e-9, gt=0)
    tol_spectrum: float = Field(default=1e-8, gt=0)


class DebugConfig(_Strict):
    unitary_crosscheck: bool = False


class OutputConfig(_Strict):
    dir: Optional[str] = None
    report: str = "report.json"
    spectrum: str = "spectrum.csv"
    steps: str = "steps.csv"
    bounds: str = "bounds.csv"


class RunConfig(_Strict):
    schema_version: Literal[1]
    model: ModelConfig
    t: Optional[float] = Field(default=None, ge=0, lt=1)
    t_grid: Optional[list[float]] = None
    N_grid: Optional[list[int]] = None
    tolerances: ToleranceConfig = ToleranceConfig()
    max_order: int = Field(default=64, ge=1)
    oracle_budget: int = Field(default=4096, ge=1)
    truncation_audit: bool = False
    debug: DebugConfig = DebugConfig()
    output: OutputConfig = OutputConfig()

    @field_validator("t_grid")
    @classmethod
    def _grid_increasing(cls, grid):
        if grid is None:
            return grid
        if not grid:
            raise ValueError("t_grid must not be empty")
        if any(not 0 <= x < 1 for x in grid):
            raise ValueError("t_grid values must lie in [0, 1)")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("t_grid must be strictly increasing")
        return grid

    @field_validator("N_grid")
    @classmethod
    def _n_grid(cls, grid):
        if grid is None:
            return grid
        if not grid or any(n < 2 for n in grid):
            raise ValueError("N_grid needs at least one value, each >= 2")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("N_grid must be strictly increasing")
        return grid

    @model_validator(mode="after")
    def _need_coupling(self):
        if self.t is None and self.t_grid is None:
            raise ValueError("give t or t_grid")
        return self

    def with_point(self, n: int, t: float) -> RunConfig:
        model = self.model.model_copy(update={"N": n})
        return self.model_copy(update={"model": model, "t": t, "t_grid": None, "N_grid": None})

    def echo(self) -> dict:
        return self.model_dump(mode="json")


def parse_config(data: dict, base_dir: Optional[Path] = None) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    spec = cfg.model.spec_file
    if spec is not None and base_dir is not None and not Path(spec).is_absolute():
        cfg = cfg.model_copy(update={
            "model": cfg.model.model_copy(update={"spec_file": str(base_dir / spec)})})
    return cfg


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(data, path.parent)
