"""Lumped-element model of the drive coil coupled to the resonator through a gyrator."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from mmtsim.errors import CouplingError, DomainError, InputError, SingularityError
from mmtsim.magnetics import MU0, Coil
from mmtsim.resonator import ResonatorModel

DEFAULT_GAMMA0 = 1e-2  # N m / A


def default_coil() -> Coil:
    return Coil(turns=170, area=2e-3, resistance=1.0, inductance=5e-3)


@dataclass(frozen=True)
class CircuitParams:
    coil: Coil
    d_cr: float = 0.06
    gamma0: float = DEFAULT_GAMMA0
    drive_v_rms: float = 1.0
    drive_freq: float | None = None

    def __post_init__(self):
        if self.d_cr <= 0:
            raise InputError("coil-rotor distance must be positive")
        if self.gamma0 < 0:
            raise InputError("gamma0 must be non-negative")
        if self.drive_v_rms < 0:
            raise InputError("drive voltage must be non-negative")

    @classmethod
    def from_geometry(cls, coil: Coil, m_r: float, d_cr: float, **kw) -> "CircuitParams":
        return cls(coil, d_cr, gyrator_coefficient(m_r, coil, d_cr), **kw)

    def with_(self, **kw) -> "CircuitParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class ImpedanceResult:
    z_total: complex | np.ndarray
    z_mech: complex | np.ndarray
    freq: float | np.ndarray


def gyrator_coefficient(m_r: float, coil: Coil, d_cr: float) -> float:
    """Torque per ampere (and emf per rad/s) at small deflection."""
    if d_cr <= 0:
        raise SingularityError("coil-rotor distance must be positive")
    if np.isinf(d_cr):
        return 0.0
    return MU0 * m_r * coil.turns * coil.area / (2 * np.pi * d_cr**3)


def _mech_impedance(omega, gamma0, model: ResonatorModel):
    omega = np.asarray(omega, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        admittance = model.kappa1 / (1j * omega) + model.damping + 1j * omega * model.inertia
        z = gamma0**2 / admittance
    return np.where(omega == 0, 0.0 + 0.0j, z)


def total_impedance(omega, circuit: CircuitParams, model: ResonatorModel) -> ImpedanceResult:
    omega_arr = np.asarray(omega, dtype=float)
    if np.any(omega_arr < 0):
        raise DomainError("frequency must be non-negative")
    coil = circuit.coil
    z_mech = _mech_impedance(omega_arr, circuit.gamma0, model)
    z_tot = coil.resistance + 1j * omega_arr * coil.inductance + z_mech
    if omega_arr.ndim == 0:
        return ImpedanceResult(complex(z_tot), complex(z_mech), float(omega_arr))
    return ImpedanceResult(z_tot, z_mech, omega_arr)


def displacement_transfer(omega, circuit: CircuitParams, model: ResonatorModel):
    """Complex angular displacement per volt of drive, ``Z_mech / (j w Gamma0 Z_tot)``."""
    omega_arr = np.asarray(omega, dtype=float)
    if circuit.gamma0 == 0:
        raise CouplingError("transfer function undefined without electro-mechanical coupling")
    if np.any(omega_arr <= 0):
        raise DomainError("transfer function needs omega > 0")
    imp = total_impedance(omega_arr, circuit, model)
    h = imp.z_mech / (1j * omega_arr * circuit.gamma0 * imp.z_total)
    return complex(h) if omega_arr.ndim == 0 else h


def coupled_resonance(circuit: CircuitParams, model: ResonatorModel) -> float:
    """Loss-free mechanical resonance including the coil's magnetic spring."""
    L = circuit.coil.inductance
    return float(np.sqrt((model.kappa1 + circuit.gamma0**2 / L) / model.inertia))


def average_power(omega, circuit: CircuitParams, model: ResonatorModel, v_rms: float | None = None):
    """Average drive power ``Re(v_rms^2 / Z_tot)`` at ``omega``."""
    v = circuit.drive_v_rms if v_rms is None else v_rms
    z = total_impedance(omega, circuit, model).z_total
    return np.real(v**2 / z)


def average_power_at_resonance(circuit: CircuitParams, model: ResonatorModel, v_rms: float | None = None) -> float:
    v = circuit.drive_v_rms if v_rms is None else v_rms
    if model.damping == 0 and circuit.gamma0 > 0:
        return 0.0
    r_eff = circuit.coil.resistance + (circuit.gamma0**2 / model.damping if circuit.gamma0 else 0.0)
    x = model.omega0 * circuit.coil.inductance
    return float(v**2 * r_eff / (r_eff**2 + x**2))


def current_rms_at_resonance(circuit: CircuitParams, model: ResonatorModel, v_rms: float | None = None) -> float:
    v = circuit.drive_v_rms if v_rms is None else v_rms
    return float(v / abs(total_impedance(model.omega0, circuit, model).z_total))


def power_dip_frequency(circuit: CircuitParams, model: ResonatorModel, span: float = 0.1, n: int = 20001) -> float:
    """Frequency (rad/s) of the local minimum of average power nearest ``omega0``.

    The search covers ``(1 +- span) omega0``; ``nan`` if power has no interior
    minimum there.
    """
    w = np.linspace(1 - span, 1 + span, n) * model.omega0
    p = average_power(w, circuit, model)
    idx = np.flatnonzero((p[1:-1] < p[:-2]) & (p[1:-1] <= p[2:])) + 1
    if idx.size == 0:
        return float("nan")
    return float(w[idx[np.argmin(np.abs(w[idx] - model.omega0))]])
