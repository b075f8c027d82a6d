"""Run configuration: JSON schema, validation and construction of model objects."""

from __future__ import annotations

import json
from functools import lru_cache
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from mmtsim import magnetics, resonator
from mmtsim.array import ArrayConfig, linear_array
from mmtsim.circuit import CircuitParams
from mmtsim.magnetics import Coil, Magnet

SCHEMA_VERSION = 1
SCHEMA_PATH = Path(__file__).parent / "schema" / "run_config.schema.json"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MagnetSpec(_Section):
    shape: Literal["cuboid", "cylinder"] = "cuboid"
    dimensions: list[PositiveFloat] = Field(default_factory=lambda: [12.7e-3, 12.7e-3, 50.8e-3])
    residual_flux_density: PositiveFloat = 1.48
    density: PositiveFloat = magnetics.NDFEB_DENSITY

    @model_validator(mode="after")
    def _dims(self):
        need = 3 if self.shape == "cuboid" else 2
        if len(self.dimensions) != need:
            raise ValueError(f"{self.shape} needs {need} dimensions")
        return self

    def build(self, **kw) -> Magnet:
        return Magnet(self.shape, tuple(self.dimensions), self.residual_flux_density, density=self.density, **kw)


class MagnetsSection(_Section):
    rotor: MagnetSpec = Field(default_factory=MagnetSpec)
    stator: MagnetSpec = Field(default_factory=MagnetSpec)
    d_rs: PositiveFloat = 16.5e-3
    damping: float = Field(5e-5, ge=0)
    torque_source: Literal["grid", "dipole"] = "grid"
    resolution: tuple[PositiveInt, PositiveInt, PositiveInt] = magnetics.DEFAULT_RESOLUTION
    fit_range_deg: PositiveFloat = 45.0
    fit_step_deg: PositiveFloat = 1.0


class CircuitSection(_Section):
    turns: PositiveInt = 170
    area: PositiveFloat = 2e-3
    resistance: PositiveFloat = 1.0
    inductance: PositiveFloat = 5e-3
    d_cr: PositiveFloat = 0.06
    gamma0: Optional[float] = Field(1e-2, ge=0)
    receiver_distance: PositiveFloat = 1000.0


class DriveSection(_Section):
    v_rms: float = Field(12.0, ge=0)
    freq_hz: Optional[PositiveFloat] = None
    duration: PositiveFloat = 1.0
    torque_law: Literal["cubic_fit", "exact_dipole", "grid_table", "linear"] = "cubic_fit"
    small_angle: bool = False
    steps_per_period: int = Field(200, ge=20)


class SweepSection(_Section):
    f_start_hz: PositiveFloat = 165.0
    f_stop_hz: PositiveFloat = 205.0
    n_points: int = Field(81, ge=2)
    direction: Literal["up", "down"] = "up"
    v_rms: float = Field(16.0, ge=0)
    carryover: bool = True
    max_periods: int = Field(2000, ge=20)

    @model_validator(mode="after")
    def _distinct(self):
        if self.f_start_hz == self.f_stop_hz:
            raise ValueError("f_start_hz and f_stop_hz must differ")
        return self


class ArraySection(_Section):
    n_rotors: int = Field(6, ge=1)
    rotor: MagnetSpec = Field(default_factory=lambda: MagnetSpec(shape="cylinder", dimensions=[3.5e-3, 76.2e-3]))
    stator: Optional[MagnetSpec] = Field(default_factory=lambda: MagnetSpec(dimensions=[12.7e-3, 12.7e-3, 76.2e-3]))
    d_rr: PositiveFloat = 5.5e-3
    d_rs: PositiveFloat = 15e-3
    neighbor_depth: Optional[Literal[1, 2]] = 2
    d_rs_range: tuple[PositiveFloat, PositiveFloat] = (8e-3, 30e-3)
    dc_radius: PositiveFloat = 0.3
    module_separation: PositiveFloat = 0.1
    n_gamma: int = Field(72, ge=4)


class ModulationSection(_Section):
    bits: str = Field("10110010", pattern=r"^[01]+$")
    bitrate: PositiveFloat = 5.0
    v_on: float = Field(10.0, ge=0)
    carrier_hz: Optional[PositiveFloat] = None
    noise_rms: float = Field(0.0, ge=0)


class DesignSection(_Section):
    family: Literal["cuboid", "cylinder"] = "cuboid"
    target_hz: PositiveFloat = 1000.0
    d_rs_range: tuple[PositiveFloat, PositiveFloat] = (12e-3, 30e-3)
    size_range: tuple[PositiveFloat, PositiveFloat] = (2e-3, 12.7e-3)
    n_samples: int = Field(12, ge=3)
    # prefactor anchor: an explicit measured frequency, else the grid-fit or pure dipole model
    anchor_hz: Optional[PositiveFloat] = None
    anchor: Literal["grid", "dipole"] = "grid"


class RunConfig(_Section):
    schema_version: Literal[1] = SCHEMA_VERSION
    magnets: MagnetsSection = Field(default_factory=MagnetsSection)
    circuit: CircuitSection = Field(default_factory=CircuitSection)
    drive: DriveSection = Field(default_factory=DriveSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    array: ArraySection = Field(default_factory=ArraySection)
    modulation: ModulationSection = Field(default_factory=ModulationSection)
    design: DesignSection = Field(default_factory=DesignSection)


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    return RunConfig.model_validate_json(text)


def json_schema() -> dict:
    return RunConfig.model_json_schema()


def write_schema(path=SCHEMA_PATH):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(json_schema(), indent=2, sort_keys=True) + "\n")


# builders -------------------------------------------------------------------


def single_rotor_magnets(cfg: RunConfig):
    m = cfg.magnets
    rotor = m.rotor.build()
    stators = [m.stator.build(position=(0.0, y, 0.0), role="stator") for y in (m.d_rs, -m.d_rs)]
    return rotor, stators


def fit_thetas(cfg: RunConfig) -> np.ndarray:
    m = cfg.magnets
    n = int(round(2 * m.fit_range_deg / m.fit_step_deg))
    return np.radians(np.linspace(-m.fit_range_deg, m.fit_range_deg, n + 1))


@lru_cache(maxsize=8)
def _cached_grid_curve(rotor: Magnet, stators: tuple, thetas: tuple, resolution: tuple):
    return magnetics.grid_torque_curve(rotor, list(stators), np.array(thetas), resolution)


def torque_curves(cfg: RunConfig):
    """``(grid_curve, dipole_curve)`` sampled over the configured fit range."""
    rotor, stators = single_rotor_magnets(cfg)
    th = fit_thetas(cfg)
    grid = _cached_grid_curve(rotor, tuple(stators), tuple(th), tuple(cfg.magnets.resolution))
    dipole = magnetics.point_dipole_torque_curve(rotor, stators, th)
    return grid, dipole


def resonator_model(cfg: RunConfig):
    """Single-rotor model and the torque table it was fitted to."""
    rotor, stators = single_rotor_magnets(cfg)
    grid, dipole = torque_curves(cfg) if cfg.magnets.torque_source == "grid" else (None, None)
    if cfg.magnets.torque_source == "grid":
        curve = grid
        fit = resonator.fit_stiffness(curve)
        k1, k3 = fit.kappa1, fit.kappa3
    else:
        m_r = resonator.magnetic_moment(rotor)
        k1, k3 = resonator.dipole_stiffness(m_r, resonator.magnetic_moment(stators[0]), cfg.magnets.d_rs)
        th = fit_thetas(cfg)
        curve = np.column_stack([th, magnetics.two_stator_dipole_torque(m_r, resonator.magnetic_moment(stators[0]), cfg.magnets.d_rs, th)])
    model = resonator.ResonatorModel(
        k1, k3, resonator.moment_of_inertia(rotor), cfg.magnets.damping, resonator.magnetic_moment(rotor)
    )
    return model, curve


def coil(cfg: RunConfig) -> Coil:
    c = cfg.circuit
    return Coil(c.turns, c.area, c.resistance, c.inductance, position=(-c.d_cr, 0.0, 0.0))


def circuit_params(cfg: RunConfig, m_r: float, v_rms: float | None = None) -> CircuitParams:
    c = cfg.circuit
    v = cfg.drive.v_rms if v_rms is None else v_rms
    if c.gamma0 is None:
        return CircuitParams.from_geometry(coil(cfg), m_r, c.d_cr, drive_v_rms=v)
    return CircuitParams(coil(cfg), c.d_cr, c.gamma0, v)


def array_config(cfg: RunConfig, d_rs: float | None = None) -> ArrayConfig:
    a = cfg.array
    stator = a.stator.build(role="stator") if a.stator is not None else None
    return linear_array(a.n_rotors, a.rotor.build(), stator, a.d_rr, a.d_rs if d_rs is None else d_rs, coil=coil(cfg))
