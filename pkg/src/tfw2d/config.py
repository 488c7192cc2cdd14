"""Run configuration: INI file sections validated by pydantic models.

Example::

    [grid]
    n1 = 32
    n2 = 4
    n3 = 64

    [scf]
    tolerance = 1e-6

Values given with ``--set section.key=value`` override the file.
"""
from __future__ import annotations

import configparser
import os
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .cell import Grid3, UnitCell
from .coulomb import GreenEvalConfig
from .homogenization import GridRule, HomogenizationPlan
from .solver import DEFAULT_AMPLITUDE, DEFAULT_GAUSS_WIDTH, NuclearModel, ScfConfig


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _grid_size(v: int) -> int:
    if v != 1 and v % 2:
        raise ValueError("must be 1 or an even integer")
    return v


class CellSection(_Section):
    q_side: float = Field(1.0, gt=0)
    length_x3: float = Field(2 * np.pi, gt=0)


class GridSection(_Section):
    n1: int = Field(32, ge=1)
    n2: int = Field(4, ge=1)
    n3: int = Field(64, ge=1)

    _even = field_validator("n1", "n2", "n3")(_grid_size)


class NuclearSection(_Section):
    kind: Literal["separable_cos_gauss", "gauss_profile", "constant", "x3_profile_file"] = (
        "separable_cos_gauss"
    )
    n: int = Field(1, ge=1)
    amplitude: float = Field(DEFAULT_AMPLITUDE, ge=0)
    gauss_width: float = Field(DEFAULT_GAUSS_WIDTH, gt=0)
    value: float = Field(1.0, ge=0)
    profile_file: Optional[str] = None


class ScfSection(_Section):
    tolerance: float = Field(1e-6, gt=0)
    max_iterations: int = Field(200, ge=1)
    mixing: float = Field(0.5, gt=0, le=1)
    eigensolver_tol: float = Field(1e-10, gt=0)
    eigensolver_max_iter: int = Field(500, ge=1)
    kinetic_exponent: float = Field(5.0 / 3.0, gt=1.5)
    acceleration: Literal["anderson", "none"] = "anderson"
    anderson_depth: int = Field(6, ge=0)


class HomogenizationSection(_Section):
    n_values: list[int] = [1, 2, 3, 4]
    g1: int = Field(32, ge=2)
    n2: int = Field(4, ge=1)
    n3: int = Field(64, ge=2)
    mode_filter: bool = True
    filter_iterates: bool = False

    @field_validator("n_values", mode="before")
    @classmethod
    def _split(cls, v):
        if isinstance(v, str):
            return [s for s in v.replace(",", " ").split()]
        return v

    @field_validator("n_values")
    @classmethod
    def _increasing(cls, v):
        if not v or v[0] < 1 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("must be a nonempty, strictly increasing list of positive integers")
        return v

    _even = field_validator("g1", "n2", "n3")(_grid_size)


class GreenSection(_Section):
    lattice_cutoff: int = Field(20, ge=2)
    quad_points: int = Field(16, ge=16)
    cell_average: Literal["analytic", "gauss"] = "analytic"


class OutputSection(_Section):
    dir: str = "tfw_out"
    format: Literal["csv", "json"] = "csv"
    threads: Union[Literal["auto"], int] = "auto"
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "WARNING"
    dump_density: bool = False

    @field_validator("threads")
    @classmethod
    def _positive(cls, v):
        if v != "auto" and v < 1:
            raise ValueError("must be a positive integer or 'auto'")
        return v

    @field_validator("log_level", mode="before")
    @classmethod
    def _upper(cls, v):
        return v.upper() if isinstance(v, str) else v


class RunConfig(_Section):
    cell: CellSection = CellSection()
    grid: GridSection = GridSection()
    nuclear: NuclearSection = NuclearSection()
    scf: ScfSection = ScfSection()
    homogenization: HomogenizationSection = HomogenizationSection()
    green: GreenSection = GreenSection()
    output: OutputSection = OutputSection()

    # -- builders -------------------------------------------------------
    def unit_cell(self) -> UnitCell:
        return UnitCell(self.cell.q_side, self.cell.length_x3)

    def grid3(self) -> Grid3:
        return Grid3(self.grid.n1, self.grid.n2, self.grid.n3, self.unit_cell())

    def line_grid(self) -> Grid3:
        return Grid3.line(self.grid.n3, self.cell.length_x3)

    def scf_config(self) -> ScfConfig:
        return ScfConfig(**self.scf.model_dump())

    def green_config(self) -> GreenEvalConfig:
        return GreenEvalConfig(q_side=self.cell.q_side, **self.green.model_dump())

    def thread_count(self) -> int:
        t = self.output.threads
        return os.cpu_count() or 1 if t == "auto" else t

    def nuclear_model(self) -> NuclearModel:
        nuc = self.nuclear
        if nuc.kind == "separable_cos_gauss":
            return NuclearModel.separable_cos_gauss(nuc.n, nuc.amplitude, nuc.gauss_width)
        if nuc.kind == "constant":
            return NuclearModel.constant(nuc.value)
        x3 = self.line_grid().axes[2]
        if nuc.kind == "gauss_profile":
            return NuclearModel.x3_profile(nuc.amplitude * np.exp(-(x3**2) / nuc.gauss_width))
        if nuc.profile_file is None:
            raise ConfigError("nuclear.profile_file", "required for kind x3_profile_file")
        values = np.loadtxt(nuc.profile_file, ndmin=1)
        if values.shape != (self.grid.n3,):
            raise ConfigError(
                "nuclear.profile_file", f"expected {self.grid.n3} values, found {values.size}"
            )
        return NuclearModel.x3_profile(values)

    def nuclear_profile_1d(self) -> np.ndarray:
        """x3 profile of the configured density for the 1D model."""
        nuc = self.nuclear
        x3 = self.line_grid().axes[2]
        if nuc.kind == "separable_cos_gauss":
            # exact x1-x2 average of |cos| is 2/pi
            return nuc.amplitude * (2 / np.pi) * np.exp(-(x3**2) / nuc.gauss_width)
        if nuc.kind == "constant":
            return np.full(self.grid.n3, nuc.value)
        return self.nuclear_model().profile

    def homogenization_plan(self) -> HomogenizationPlan:
        h = self.homogenization
        return HomogenizationPlan(
            n_values=tuple(h.n_values),
            base_model=self.nuclear_model(),
            grid_rule=GridRule(h.g1, h.n2, h.n3, self.unit_cell()),
            solver_config=self.scf_config(),
            mode_filter=h.mode_filter,
            filter_iterates=h.filter_iterates,
        )


def _format_error(err: ValidationError) -> ConfigError:
    first = err.errors()[0]
    key = ".".join(str(part) for part in first["loc"])
    return ConfigError(key, first["msg"])


def parse_overrides(items) -> dict:
    out: dict = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like section.key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if key.count(".") != 1:
            raise ConfigError(key, "override key must be section.key")
        section, name = key.split(".")
        out.setdefault(section, {})[name] = value.strip()
    return out


def load_config(path=None, overrides=None) -> RunConfig:
    """Read an INI file (optional), apply overrides and validate."""
    data: dict = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        p = Path(path)
        if not p.is_file():
            raise ConfigError("config", f"file not found: {p}")
        try:
            parser.read(p)
        except configparser.Error as exc:
            raise ConfigError("config", str(exc)) from exc
        data = {s: dict(parser.items(s)) for s in parser.sections()}
    for section, values in (overrides or {}).items():
        data.setdefault(section, {}).update(values)
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise _format_error(exc) from None
    try:
        cfg.grid3()
        cfg.scf_config()
    except ValueError as exc:
        raise ConfigError("config", str(exc)) from exc
    return cfg
