"""Frequency scaling laws for single-rotor devices and their inversion for a target."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mmtsim.errors import InputError
from mmtsim.magnetics import Magnet
from mmtsim.resonator import dipole_stiffness, magnetic_moment, moment_of_inertia, natural_frequency


@dataclass(frozen=True)
class PowerLaw:
    """``f = prefactor * x ** exponent`` fitted in log-log space."""

    prefactor: float
    exponent: float

    def __call__(self, x):
        return self.prefactor * np.asarray(x, dtype=float) ** self.exponent

    def invert(self, f):
        return (np.asarray(f, dtype=float) / self.prefactor) ** (1.0 / self.exponent)

    def rescaled(self, factor: float) -> "PowerLaw":
        return PowerLaw(self.prefactor * factor, self.exponent)


def fit_power_law(x, f) -> PowerLaw:
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(f <= 0):
        raise InputError("power-law fit needs at least two positive samples")
    slope, intercept = np.polyfit(np.log(x), np.log(f), 1)
    return PowerLaw(float(np.exp(intercept)), float(slope))


def rotor_for(family: str, size: float, length: float, br: float) -> Magnet:
    """Square rotor of side ``size`` or cylindrical rotor of diameter ``size``."""
    if family == "cuboid":
        return Magnet.cuboid(size, length, br)
    if family == "cylinder":
        return Magnet.cylinder(size, length, br)
    raise InputError(f"unknown rotor family {family!r}")


def dipole_frequency_hz(rotor: Magnet, stator: Magnet, d_rs: float) -> float:
    k1, _ = dipole_stiffness(magnetic_moment(rotor), magnetic_moment(stator), d_rs)
    return natural_frequency(k1, moment_of_inertia(rotor)) / (2 * np.pi)


@dataclass
class DesignResult:
    family: str
    target_hz: float
    recommended_size: float
    drs_law: PowerLaw
    size_law: PowerLaw
    scale: float
    drs_data: np.ndarray
    size_data: np.ndarray


def design_rotor(
    target_hz: float,
    family: str = "cuboid",
    stator: Magnet | None = None,
    d_rs: float = 16.5e-3,
    length: float = 50.8e-3,
    br: float = 1.48,
    reference_side: float = 12.7e-3,
    d_rs_range=(12e-3, 30e-3),
    size_range=(2e-3, 12.7e-3),
    n_samples: int = 12,
    anchor_hz: float | None = None,
) -> DesignResult:
    """Fit f-vs-d_rs and f-vs-size power laws to dipole-model data and invert for ``target_hz``.

    ``anchor_hz`` is a measured frequency of the square ``reference_side`` rotor
    at ``d_rs``; when given, the size law is rescaled to pass through it while
    keeping the model exponent.
    """
    if target_hz <= 0:
        raise InputError("target frequency must be positive")
    stator = stator or Magnet.cuboid(12.7e-3, length, br, role="stator")
    ref = Magnet.cuboid(reference_side, length, br)
    drs = np.geomspace(*d_rs_range, n_samples)
    f_drs = np.array([dipole_frequency_hz(ref, stator, d) for d in drs])
    sizes = np.geomspace(*size_range, n_samples)
    f_size = np.array([dipole_frequency_hz(rotor_for(family, s, length, br), stator, d_rs) for s in sizes])
    drs_law = fit_power_law(drs, f_drs)
    size_law = fit_power_law(sizes, f_size)
    scale = 1.0
    if anchor_hz is not None:
        scale = anchor_hz / dipole_frequency_hz(ref, stator, d_rs)
    law = size_law.rescaled(scale)
    return DesignResult(
        family,
        target_hz,
        float(law.invert(target_hz)),
        drs_law,
        size_law,
        scale,
        np.column_stack([drs, f_drs]),
        np.column_stack([sizes, f_size]),
    )
