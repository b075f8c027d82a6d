"""Single-rotor mechanical resonator: moments, inertia, stiffness fits, backbone."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from mmtsim.errors import DomainError, FitError, InputError, SingularityError
from mmtsim.magnetics import (
    DEFAULT_RESOLUTION,
    MU0,
    Magnet,
    grid_torque_curve,
    single_rotor_geometry,
    two_stator_dipole_torque,
)

DEFAULT_FIT_THETAS = np.radians(np.arange(-45.0, 45.0 + 0.5, 1.0))
BACKBONE_VALIDITY = 0.2


class BackboneValidityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ResonatorModel:
    kappa1: float
    kappa3: float
    inertia: float
    damping: float
    rotor_moment: float

    def __post_init__(self):
        if self.kappa1 <= 0:
            raise InputError("kappa1 must be positive")
        if self.inertia <= 0:
            raise InputError("inertia must be positive")
        if self.damping < 0:
            raise InputError("damping must be non-negative")
        if self.rotor_moment <= 0:
            raise InputError("rotor moment must be positive")

    @property
    def omega0(self) -> float:
        return natural_frequency(self.kappa1, self.inertia)

    def torque(self, theta):
        return self.kappa1 * theta + self.kappa3 * theta**3


@dataclass(frozen=True)
class MotionState:
    theta: float = 0.0
    theta_dot: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.theta, self.theta_dot, self.time])):
            raise InputError("motion state must be finite")


@dataclass(frozen=True)
class StiffnessFit:
    kappa1: float
    kappa3: float
    residual: float

    def __iter__(self):
        return iter((self.kappa1, self.kappa3))

    def cubic_fraction(self, theta: float) -> float:
        """Size of the cubic term relative to the linear term at ``theta``."""
        return abs(self.kappa3 * theta**2 / self.kappa1)


def magnetic_moment(magnet: Magnet) -> float:
    return magnet.residual_flux_density * magnet.volume / MU0


def moment_of_inertia(magnet: Magnet, density: float | None = None) -> float:
    """Inertia about the long (z) axis through the centroid."""
    rho = magnet.density if density is None else density
    mass = rho * magnet.volume
    if magnet.shape == "cuboid":
        lx, ly, _ = magnet.dimensions
        return mass * (lx**2 + ly**2) / 12.0
    return mass * magnet.dimensions[0] ** 2 / 8.0


def fit_stiffness(samples) -> StiffnessFit:
    """Least-squares fit of ``tau = kappa1 theta + kappa3 theta^3``.

    ``samples`` is an ``(n, 2)`` array-like of ``(theta, tau)`` pairs.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise InputError("samples must be (theta, tau) pairs")
    if len(data) < 4:
        raise InputError("need at least 4 samples to fit stiffness")
    theta, tau = data[:, 0], data[:, 1]
    design = np.column_stack([theta, theta**3])
    coef, _, rank, _ = np.linalg.lstsq(design, tau, rcond=None)
    if rank < 2:
        raise FitError("stiffness samples do not determine both coefficients")
    residual = float(np.linalg.norm(design @ coef - tau))
    return StiffnessFit(float(coef[0]), float(coef[1]), residual)


def natural_frequency(kappa1: float, inertia: float) -> float:
    if kappa1 <= 0 or inertia <= 0:
        raise DomainError("natural frequency needs positive stiffness and inertia")
    return float(np.sqrt(kappa1 / inertia))


def backbone_frequency(model: ResonatorModel, theta_max) -> float:
    """Amplitude-dependent resonance ``omega0 + 3/8 kappa3 / sqrt(kappa1 I) theta_max^2``."""
    theta_max = np.asarray(theta_max, dtype=float)
    if np.any(theta_max < 0):
        raise DomainError("theta_max must be non-negative")
    w0 = model.omega0
    shift = 0.375 * model.kappa3 / np.sqrt(model.kappa1 * model.inertia) * theta_max**2
    if np.any(np.abs(shift) > BACKBONE_VALIDITY * w0):
        warnings.warn(
            "backbone correction exceeds 20% of omega0; first-order estimate is unreliable",
            BackboneValidityWarning,
            stacklevel=2,
        )
    out = w0 + shift
    return float(out) if out.ndim == 0 else out


def carrier_field_instant(m_r: float, theta, r_x: float):
    """x-directed receiver field for instantaneous deflection ``theta``."""
    if r_x <= 0:
        raise SingularityError("receiver distance must be positive")
    return -MU0 * m_r * np.sin(theta) / (2 * np.pi * r_x**3)


def carrier_field_rms(m_r: float, theta_max: float, r_x: float) -> float:
    if r_x <= 0:
        raise SingularityError("receiver distance must be positive")
    return MU0 * m_r * np.sin(theta_max) / (2 * np.sqrt(2) * np.pi * r_x**3)


def dipole_stiffness(m_r: float, m_s: float, d_rs: float) -> tuple[float, float]:
    """Point-dipole ``(kappa1, kappa3)`` for a rotor between two coaxial stators."""
    k1 = MU0 * m_r * m_s / (np.pi * d_rs**3)
    return k1, -k1 / 6.0


def dipole_model(
    rotor: Magnet | None = None,
    stator: Magnet | None = None,
    d_rs: float = 16.5e-3,
    damping: float = 5e-5,
) -> ResonatorModel:
    """Resonator whose stiffness comes from the analytic two-stator dipole torque."""
    if rotor is None or stator is None:
        r0, s0 = single_rotor_geometry(d_rs=d_rs)
        rotor = rotor or r0
        stator = stator or s0[0]
    m_r = magnetic_moment(rotor)
    k1, k3 = dipole_stiffness(m_r, magnetic_moment(stator), d_rs)
    return ResonatorModel(k1, k3, moment_of_inertia(rotor), damping, m_r)


def exact_dipole_fit(m_r, m_s, d_rs, thetas=DEFAULT_FIT_THETAS) -> StiffnessFit:
    """Cubic fit to the exact ``sin`` torque law of the two-stator dipole model."""
    tau = two_stator_dipole_torque(m_r, m_s, d_rs, thetas)
    return fit_stiffness(np.column_stack([thetas, tau]))


def grid_model(
    rotor_side: float = 12.7e-3,
    stator_side: float = 12.7e-3,
    length: float = 50.8e-3,
    d_rs: float = 16.5e-3,
    damping: float = 5e-5,
    resolution=DEFAULT_RESOLUTION,
    thetas=DEFAULT_FIT_THETAS,
    br: float = 1.48,
    density: float | None = None,
):
    """Resonator fitted to the dipole-grid torque curve of the single-rotor geometry.

    Returns ``(model, curve)`` where ``curve`` holds the sampled ``(theta, tau)`` rows.
    """
    rotor, stators = single_rotor_geometry(rotor_side, stator_side, length, d_rs, br)
    curve = grid_torque_curve(rotor, stators, thetas, resolution)
    fit = fit_stiffness(curve)
    model = ResonatorModel(
        fit.kappa1, fit.kappa3, moment_of_inertia(rotor, density), damping, magnetic_moment(rotor)
    )
    return model, curve
