"""Scenario configuration: YAML files validated with pydantic."""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .array_model import ElementPattern

SCHEMA_VERSION = 1
BUNDLED = ("macro_11x5", "small_6x3")


class ConfigError(ValueError):
    """Configuration could not be read or failed validation."""


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometryBlock(_Block):
    n_elements: int = Field(gt=0)
    spacing_wavelengths: float = Field(gt=0)
    element_pattern: ElementPattern = ElementPattern.MACRO65
    grid_step_deg: float = Field(0.1, gt=0, le=5)


class TiltBlock(_Block):
    """Design tilts (boresight-relative degrees) and their mask shape."""

    start_deg: Optional[float] = None
    stop_deg: Optional[float] = None
    step_deg: Optional[float] = Field(None, gt=0)
    values_deg: Optional[List[float]] = None
    halfpower_halfwidth_deg: float = Field(gt=0)
    halfpower_bounds: Optional[Tuple[float, float]] = (0.45, 0.55)
    sll_db: float = Field(gt=0)
    transition_deg: Optional[float] = None

    @model_validator(mode="after")
    def _one_source(self):
        ranged = (self.start_deg, self.stop_deg, self.step_deg)
        if self.values_deg is not None:
            if any(v is not None for v in ranged):
                raise ValueError("give either values_deg or start/stop/step, not both")
            if not self.values_deg:
                raise ValueError("tilt list is empty")
            if len(set(self.values_deg)) != len(self.values_deg):
                raise ValueError("tilt list has duplicates")
        else:
            if any(v is None for v in ranged):
                raise ValueError("tilt range needs start_deg, stop_deg and step_deg")
            if self.stop_deg < self.start_deg:
                raise ValueError("stop_deg must not be below start_deg")
        if self.halfpower_bounds is not None:
            lo, hi = self.halfpower_bounds
            if not 0 < lo <= hi:
                raise ValueError("halfpower_bounds must satisfy 0 < lo <= hi")
        if self.transition_deg is not None and self.transition_deg < self.halfpower_halfwidth_deg:
            raise ValueError("transition_deg must be at least the mainlobe halfwidth")
        return self

    def tilts(self) -> List[float]:
        if self.values_deg is not None:
            return sorted(float(v) for v in self.values_deg)
        n = int(round((self.stop_deg - self.start_deg) / self.step_deg)) + 1
        return [round(self.start_deg + k * self.step_deg, 10) for k in range(n)]


class SolverBlock(_Block):
    max_iterations: int = Field(500, gt=0)
    tolerance: float = Field(1e-6, gt=0)
    barrier_mu0: float = Field(1.0, gt=0)
    barrier_shrink: float = Field(0.2, gt=0, lt=1)
    ccp_iterations: int = Field(5, gt=0)
    pa_box: bool = True
    pa_range_db: float = Field(1.0, gt=0)
    pa_anchor: Optional[float] = Field(None, gt=0)
    energy_threshold: float = Field(0.995, gt=0, le=1)


class GivensBlock(_Block):
    enabled: bool = False
    phase_threshold_deg: float = Field(30.0, gt=0)
    amplitude_threshold_db: float = Field(3.0, gt=0)
    max_rotations: int = Field(20, ge=0)


class FactorizerBlock(_Block):
    n_trx: int = Field(gt=0)
    mask_runs: Optional[List[Tuple[int, int]]] = None
    combiner_kind: Literal["auto", "wilkinson", "ratrace"] = "auto"
    recirculate: bool = False
    givens: GivensBlock = GivensBlock()


class CalibrationBlock(_Block):
    max_phase_deg: float = Field(40.0, ge=0)
    max_amplitude_db: float = Field(1.0, ge=0)
    noise_floor_db: float = -60.0
    n_sweep: int = Field(361, ge=2)
    drift_deg_per_step: float = 0.0


class SimulationBlock(_Block):
    component_loss_db: float = Field(0.0, ge=0)
    excitation_normalization: Literal["unit_power"] = "unit_power"
    sweep_start_deg: Optional[float] = None
    sweep_stop_deg: Optional[float] = None
    sweep_step_deg: float = Field(1.0, gt=0)
    calibration: CalibrationBlock = CalibrationBlock()


class OutputBlock(_Block):
    directory: str = "out"
    formats: List[Literal["csv", "json"]] = ["csv", "json"]


class ScenarioConfig(_Block):
    schema_version: int
    name: str = "scenario"
    seed: int = 42
    geometry: GeometryBlock
    tilts: TiltBlock
    solver: SolverBlock
    factorizer: FactorizerBlock
    simulation: SimulationBlock
    output: OutputBlock

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; expected {SCHEMA_VERSION}")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        f = self.factorizer
        if f.n_trx > self.geometry.n_elements:
            raise ValueError("factorizer.n_trx exceeds geometry.n_elements")
        if f.mask_runs is not None:
            if len(f.mask_runs) != f.n_trx:
                raise ValueError("factorizer.mask_runs needs one (start, length) run per transceiver")
            for start, length in f.mask_runs:
                if start < 0 or length < 1 or start + length > self.geometry.n_elements:
                    raise ValueError(f"mask run ({start}, {length}) falls outside the array")
        for t in self.tilts.tilts():
            if abs(t) + self.tilts.halfpower_halfwidth_deg > 90:
                raise ValueError(f"tilt {t} puts the mainlobe outside the visible region")
        return self

    def digest(self) -> str:
        """Stable hash of the validated content."""
        text = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def bundled_path(name: str) -> Path:
    if name not in BUNDLED:
        raise ConfigError(f"no bundled config {name!r}; choose from {', '.join(BUNDLED)}")
    return Path(str(resources.files("hybridbf") / "configs" / f"{name}.yaml"))


def load_config(path) -> ScenarioConfig:
    """Read a YAML file, or a bundled config by name (``macro_11x5``, ``small_6x3``)."""
    path = str(path)
    p = bundled_path(path) if path in BUNDLED else Path(path)
    try:
        text = p.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {p}: {err.strerror or err}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"{p}: malformed YAML: {err}") from None
    return parse_config(data)
