"""Scenario files: a YAML tree with SI units spelled out in every key.

A scenario describes the radar, the scene and the processing options of one
run. Loading validates everything up front so a bad file fails before any
simulation starts, with the offending field named in the message.
"""
from __future__ import annotations

import copy
import math
from importlib import resources
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import InfeasibleSceneError, ScenarioError
from .estimation import HeightGrid, SpectrumMethod
from .extraction import MIN_AM_SAMPLES, SamplingMode
from .fmcw import RadarConfig, TargetSpec, WindowKind
from .geometry import GroundModel, ScatteringModel
from .pipeline import ProcessingOptions, RunResult, simulate_and_estimate

__all__ = [
    "DEFAULT_NOISE_SEED",
    "Scenario",
    "load_scenario",
    "load_preset",
    "preset_names",
    "resolve_scenario",
    "apply_overrides",
    "parse_override",
    "n_cycles",
    "run_scenario",
]

DEFAULT_NOISE_SEED = 20221

_PRESET_PACKAGE = "fmcw_height.presets"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RadarSection(_Section):
    center_frequency_hz: float = Field(76.5e9, gt=0)
    bandwidth_hz: float = Field(1.0e9, gt=0)
    ramp_duration_s: float = Field(80e-6, gt=0)
    ramps_per_cpi: int = Field(64, ge=1)
    ramp_repetition_interval_s: float = Field(100e-6, gt=0)
    measurement_cycle_s: float = Field(55.6e-3, gt=0)
    samples_per_ramp: int = Field(2048, ge=2)
    noise_power: float = Field(0.0, ge=0)

    def to_config(self) -> RadarConfig:
        return RadarConfig(
            center_frequency=self.center_frequency_hz,
            bandwidth=self.bandwidth_hz,
            ramp_duration=self.ramp_duration_s,
            ramps_per_cpi=self.ramps_per_cpi,
            ramp_repetition_interval=self.ramp_repetition_interval_s,
            measurement_cycle=self.measurement_cycle_s,
            samples_per_ramp=self.samples_per_ramp,
            noise_power=self.noise_power,
        )


class GroundSection(_Section):
    # a real number or a [real, imaginary] pair
    reflection_coefficient: float | tuple[float, float] = -1.0

    @field_validator("reflection_coefficient")
    @classmethod
    def _bounded(cls, value):
        re, im = (value, 0.0) if isinstance(value, float) else value
        if math.hypot(re, im) > 1.0:
            raise ValueError("magnitude must be <= 1")
        return value

    def to_model(self) -> GroundModel:
        value = self.reflection_coefficient
        gamma = complex(value) if isinstance(value, float) else complex(*value)
        return GroundModel(gamma)


class TargetSection(_Section):
    height_m: float = Field(ge=0)
    initial_distance_m: float = Field(gt=0)
    radial_speed_mps: float = 0.0
    amplitude: float = Field(1.0, gt=0)
    scattering: ScatteringModel = ScatteringModel.ISOTROPIC

    def to_spec(self) -> TargetSpec:
        return TargetSpec(
            height=self.height_m,
            initial_distance=self.initial_distance_m,
            radial_speed=self.radial_speed_mps,
            amplitude=self.amplitude,
            scattering=self.scattering,
        )


class ProcessingSection(_Section):
    map_window: WindowKind = WindowKind.HANN
    spectral_window: WindowKind = WindowKind.RECTANGULAR
    threshold_factor: float = Field(8.0, gt=0)
    gate_radius_m: float | None = Field(None, gt=0)
    coast_limit: int = Field(3, ge=0)
    max_speed_mps: float = Field(50.0, gt=0)
    max_height_m: float = Field(6.0, gt=0)
    height_spacing_m: float = Field(0.02, gt=0)
    method: SpectrumMethod | None = None

    def to_options(self) -> ProcessingOptions:
        return ProcessingOptions(
            map_window=self.map_window,
            spectral_window=self.spectral_window,
            threshold_factor=self.threshold_factor,
            gate_radius=self.gate_radius_m,
            coast_limit=self.coast_limit,
            max_speed=self.max_speed_mps,
            grid=HeightGrid.uniform(self.max_height_m, self.height_spacing_m),
            method=self.method,
        )


class Scenario(_Section):
    name: str = "scenario"
    description: str = ""
    radar: RadarSection = RadarSection()
    sensor_height_m: float = Field(gt=0)
    ground: GroundSection = GroundSection()
    targets: list[TargetSection] = Field(min_length=1)
    sampling_mode: SamplingMode = SamplingMode.SOMC
    duration_s: float = Field(gt=0)
    noise_seed: int = DEFAULT_NOISE_SEED
    processing: ProcessingSection = ProcessingSection()
    output_dir: str | None = None

    @model_validator(mode="after")
    def _enough_samples(self):
        try:
            cfg = self.radar.to_config()
        except ValueError as exc:
            raise ValueError(f"radar: {exc}") from exc
        cycles = n_cycles(self)
        if self.sampling_mode is SamplingMode.SOMC and cycles < MIN_AM_SAMPLES:
            raise ValueError(
                f"duration_s gives {cycles} measurement cycles, SoMC needs >= {MIN_AM_SAMPLES}"
            )
        if self.sampling_mode is SamplingMode.SOPRI and cfg.ramps_per_cpi < MIN_AM_SAMPLES:
            raise ValueError(f"radar.ramps_per_cpi must be >= {MIN_AM_SAMPLES} for SoPRI")
        return self


def n_cycles(scenario: Scenario) -> int:
    """Measurement cycles that start within ``duration_s`` (the first at t=0)."""
    ratio = scenario.duration_s / scenario.radar.measurement_cycle_s
    return int(math.floor(ratio + 1e-9)) + 1


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "scenario"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def resolve_scenario(data: Any) -> Scenario:
    """Validate a raw scenario tree, raising ScenarioError with field names."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping at the top level")
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(_format_validation(exc)) from None


def _read_yaml(text: str, origin: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{origin}: cannot parse YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{origin}: scenario must be a mapping at the top level")
    return data


def preset_names() -> list[str]:
    root = resources.files(_PRESET_PACKAGE)
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def _preset_text(name: str) -> str:
    if name not in preset_names():
        raise ScenarioError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return resources.files(_PRESET_PACKAGE).joinpath(f"{name}.yaml").read_text(encoding="utf-8")


def load_raw(source: str | Path) -> dict:
    """Raw scenario tree from a file path or a preset name."""
    path = Path(source)
    if path.is_file():
        return _read_yaml(path.read_text(encoding="utf-8"), str(path))
    if str(source) in preset_names():
        return _read_yaml(_preset_text(str(source)), f"preset {source}")
    raise ScenarioError(f"{source}: no such scenario file or preset")


def load_scenario(source: str | Path, overrides: list[str] | tuple[str, ...] = ()) -> Scenario:
    base = resolve_scenario(load_raw(source))
    return apply_overrides(base, overrides) if overrides else base


def load_preset(name: str) -> Scenario:
    return resolve_scenario(_read_yaml(_preset_text(name), f"preset {name}"))


def parse_value(text: str) -> Any:
    """Override value: int, then float, then any YAML scalar or list."""
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse override value {text!r}: {exc}") from None


def parse_override(item: str) -> tuple[str, Any]:
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ScenarioError(f"override {item!r} is not of the form key=value")
    return key.strip(), parse_value(value.strip())


def _assign(node: Any, parts: list[str], value: Any, full_key: str) -> None:
    head, rest = parts[0], parts[1:]
    if isinstance(node, list):
        if head == "*":
            indices = range(len(node))
        else:
            try:
                indices = [int(head)]
                node[indices[0]]
            except (ValueError, IndexError):
                raise ScenarioError(f"unknown override key {full_key!r}") from None
        for i in indices:
            if rest:
                _assign(node[i], rest, value, full_key)
            else:
                node[i] = copy.deepcopy(value)
        return
    if not isinstance(node, dict) or head not in node:
        raise ScenarioError(f"unknown override key {full_key!r}")
    if rest:
        _assign(node[head], rest, value, full_key)
    else:
        node[head] = copy.deepcopy(value)


def check_override_key(scenario: Scenario, key: str) -> None:
    """Raise ScenarioError when ``key`` does not address a scenario field."""
    _assign(scenario.model_dump(mode="json"), key.split("."), None, key)


def apply_overrides(scenario: Scenario, overrides) -> Scenario:
    """Dotted-key overrides, e.g. ``targets.0.height_m=1.5`` or ``targets.*.amplitude=2``.

    Keys must address an existing field (defaults included); the result is
    validated again as a whole.
    """
    tree = scenario.model_dump(mode="json")
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        _assign(tree, key.split("."), value, key)
    return resolve_scenario(tree)


def check_feasible(scenario: Scenario) -> None:
    """Targets must stay at positive distance until the last CPI ends."""
    cfg = scenario.radar
    t_end = (n_cycles(scenario) - 1) * cfg.measurement_cycle_s + cfg.ramps_per_cpi * cfg.ramp_repetition_interval_s
    for i, tg in enumerate(scenario.targets):
        d_end = tg.initial_distance_m + tg.radial_speed_mps * t_end
        if d_end <= 0:
            raise InfeasibleSceneError(
                f"targets.{i} reaches distance {d_end:.3f} m <= 0 before the run ends at {t_end:.3f} s"
            )


def run_scenario(scenario: Scenario) -> RunResult:
    """Simulate and estimate one validated scenario."""
    check_feasible(scenario)
    return simulate_and_estimate(
        scenario.radar.to_config(),
        [t.to_spec() for t in scenario.targets],
        scenario.ground.to_model(),
        scenario.sensor_height_m,
        n_cycles(scenario),
        scenario.sampling_mode,
        scenario.processing.to_options(),
        seed=scenario.noise_seed,
    )
