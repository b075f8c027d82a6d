"""Multi-rotor arrays: stiffness assembly, eigenmodes, mode shaping and dc field maps.

Rotors and stators in a module sit on a line along y, the common rest
direction of their moments, so neighbouring dipoles interact head to tail.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh

from mmtsim.circuit import default_coil
from mmtsim.dynamics import ArrayModel
from mmtsim.errors import GeometryError, InputError
from mmtsim.magnetics import MU0, Coil, Magnet, field_of_magnets
from mmtsim.resonator import magnetic_moment, moment_of_inertia

_K = MU0 / (4 * np.pi)


class BoundaryOptimumWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Module:
    rotor_indices: tuple
    dipole_sign: int = 1
    coil: Coil | None = None
    stator_indices: tuple = ()


@dataclass
class ArrayConfig:
    rotors: list
    stators: list
    d_rr: float
    d_rs: float
    modules: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.rotors) < 1:
            raise InputError("array needs at least one rotor")
        if self.d_rr <= 0 or self.d_rs <= 0:
            raise InputError("spacings must be positive")
        if not self.modules:
            self.modules = [
                Module(tuple(range(len(self.rotors))), 1, None, tuple(range(len(self.stators))))
            ]

    @property
    def n_rotors(self) -> int:
        return len(self.rotors)

    @property
    def magnets(self) -> list:
        return list(self.rotors) + list(self.stators)

    @property
    def inertias(self) -> np.ndarray:
        return np.array([moment_of_inertia(r) for r in self.rotors])


def linear_array(
    n_rotors: int,
    rotor: Magnet,
    stator: Magnet | None,
    d_rr: float,
    d_rs: float,
    z: float = 0.0,
    sign: int = 1,
    coil: Coil | None = None,
) -> ArrayConfig:
    """One module: ``n_rotors`` centred on the origin along y, a stator beyond each end."""
    if n_rotors < 1:
        raise InputError("array needs at least one rotor")
    axis = (0.0, float(sign), 0.0)
    ys = (np.arange(n_rotors) - (n_rotors - 1) / 2) * d_rr
    rotors = [rotor.moved((0.0, y, z), axis) for y in ys]
    stators = []
    if stator is not None:
        end = ys[-1] + d_rs
        stators = [
            Magnet(stator.shape, stator.dimensions, stator.residual_flux_density, axis,
                   (0.0, y, z), "stator", stator.density)
            for y in (-end, end)
        ]
    module = Module(tuple(range(n_rotors)), sign, coil, tuple(range(len(stators))))
    return ArrayConfig(rotors, stators, d_rr, d_rs, [module])


def six_rotor_module(d_rs: float = 15e-3, d_rr: float = 5.5e-3, with_stators: bool = True, **kw) -> ArrayConfig:
    """Six cylindrical rotors (3.5 mm x 76.2 mm) with 12.7 mm square stators."""
    rotor = Magnet.cylinder(3.5e-3, 76.2e-3)
    stator = Magnet.cuboid(12.7e-3, 76.2e-3, role="stator") if with_stators else None
    return linear_array(6, rotor, stator, d_rr, d_rs, coil=default_coil(), **kw)


def opposed_modules(base: ArrayConfig, separation: float) -> ArrayConfig:
    """Two copies of a single-module array stacked along z with opposite dipoles.

    The copies sit at ``z = +/- separation / 2`` so the mirror plane between
    them is ``z = 0``.
    """
    if separation <= 0:
        raise InputError("module separation must be positive")
    if min(r.length for r in base.magnets) > separation:
        raise GeometryError("modules overlap along z")
    rotors, stators, modules = [], [], []
    for sign, dz in ((1, separation / 2), (-1, -separation / 2)):
        r0, s0 = len(rotors), len(stators)
        for mag in base.rotors:
            rotors.append(mag.moved(np.add(mag.position, (0, 0, dz)), sign * np.asarray(mag.magnetization_axis)))
        for mag in base.stators:
            stators.append(mag.moved(np.add(mag.position, (0, 0, dz)), sign * np.asarray(mag.magnetization_axis)))
        coil = base.modules[0].coil if base.modules else None
        modules.append(Module(tuple(range(r0, len(rotors))), sign, coil, tuple(range(s0, len(stators)))))
    return ArrayConfig(rotors, stators, base.d_rr, base.d_rs, modules)


def _chain(config: ArrayConfig, module: Module):
    items = [("r", i, config.rotors[i]) for i in module.rotor_indices]
    items += [("s", i, config.stators[i]) for i in module.stator_indices]
    items.sort(key=lambda it: it[2].position[1])
    return items


def build_stiffness_matrix(config: ArrayConfig, neighbor_depth: int | None = 2) -> np.ndarray:
    """Linearized torsional stiffness ``K`` with ``tau = K theta``.

    A rotor pair at distance ``d`` adds ``c (2 theta_i + theta_j)`` to the
    torque on rotor ``i`` with ``c = mu0 M_i M_j / (4 pi d^3)``. A stator
    adds ``2c`` to the diagonal of each rotor it reaches. Only neighbours up to
    ``neighbor_depth`` places apart along the chain (stators included) couple;
    ``None`` couples every pair. Modules do not couple to each other.
    """
    if neighbor_depth is not None and neighbor_depth not in (1, 2):
        raise InputError("neighbor_depth must be 1, 2 or None")
    n = config.n_rotors
    K = np.zeros((n, n))
    for module in config.modules:
        chain = _chain(config, module)
        for a, (kind_a, ia, mag_a) in enumerate(chain):
            if kind_a != "r":
                continue
            m_a = magnetic_moment(mag_a)
            for b, (kind_b, ib, mag_b) in enumerate(chain):
                if a == b or (neighbor_depth is not None and abs(a - b) > neighbor_depth):
                    continue
                d = np.linalg.norm(np.subtract(mag_a.position, mag_b.position))
                c = _K * m_a * magnetic_moment(mag_b) / d**3
                K[ia, ia] += 2 * c
                if kind_b == "r":
                    K[ia, ib] += c
    return K


@dataclass(frozen=True)
class ModeSet:
    """Eigenfrequencies (rad/s, ascending) and unit-norm mode shapes (columns)."""

    frequencies: np.ndarray
    shapes: np.ndarray
    inertias: np.ndarray

    def mass_normalized(self) -> np.ndarray:
        """Shapes scaled so that ``V.T diag(I) V = 1``."""
        scale = np.sqrt(np.einsum("ij,i,ij->j", self.shapes, self.inertias, self.shapes))
        return self.shapes / scale

    @property
    def in_phase_index(self) -> int:
        return in_phase_mode_index(self.shapes)

    @property
    def in_phase_shape(self) -> np.ndarray:
        return self.shapes[:, self.in_phase_index]


def eigenmodes(K, inertias) -> ModeSet:
    """Solve ``K v = w^2 diag(I) v``."""
    K = np.asarray(K, dtype=float)
    inertias = np.broadcast_to(np.asarray(inertias, dtype=float), (K.shape[0],)).copy()
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InputError("stiffness matrix must be square")
    if not np.allclose(K, K.T, rtol=1e-12, atol=1e-14 * np.abs(K).max(initial=1.0)):
        raise InputError("stiffness matrix must be symmetric")
    if np.any(inertias <= 0):
        raise InputError("inertias must be positive")
    w2, vecs = eigh(K, np.diag(inertias))
    w2 = np.clip(w2, 0.0, None)
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    for j in range(vecs.shape[1]):
        k = np.argmax(np.abs(vecs[:, j]))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return ModeSet(np.sqrt(w2), vecs, inertias)


def in_phase_mode_index(shapes) -> int:
    """Column whose components most nearly share one sign."""
    shapes = np.asarray(shapes)
    score = np.abs(shapes.sum(axis=0)) / np.abs(shapes).sum(axis=0)
    return int(np.argmax(score))


def mode_uniformity(shape) -> float:
    """``1 - std(|v|) / mean(|v|)``, clamped at zero."""
    a = np.abs(np.asarray(shape, dtype=float))
    if not np.any(a):
        raise InputError("mode shape must be non-zero")
    return float(max(0.0, 1.0 - a.std() / a.mean()))


def in_phase_uniformity(config: ArrayConfig, neighbor_depth: int | None = 2) -> float:
    modes = eigenmodes(build_stiffness_matrix(config, neighbor_depth), config.inertias)
    return mode_uniformity(modes.in_phase_shape)


def golden_section_max(f, lo: float, hi: float, tol: float):
    """Maximize a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    inv_phi = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


@dataclass(frozen=True)
class StatorOptimum:
    d_rs: float
    uniformity: float
    interior: bool
    endpoint_values: tuple


def optimize_stator_distance(
    config: ArrayConfig,
    d_rs_range: tuple,
    neighbor_depth: int | None = 2,
    tol: float = 1e-6,
) -> StatorOptimum:
    """Stator distance that makes the in-phase mode most uniform."""
    lo, hi = map(float, d_rs_range)
    if lo <= 0 or hi <= lo:
        raise InputError("d_rs range must be positive and increasing")
    rotor = config.rotors[0]
    stator = config.stators[0] if config.stators else None
    sign = config.modules[0].dipole_sign if config.modules else 1

    def objective(d):
        cfg = linear_array(config.n_rotors, rotor, stator, config.d_rr, d, rotor.position[2], sign)
        return in_phase_uniformity(cfg, neighbor_depth)

    f_lo, f_hi = objective(lo), objective(hi)
    x, fx = golden_section_max(objective, lo, hi, tol)
    best_end = max(f_lo, f_hi)
    if fx <= best_end + 1e-12:
        if abs(f_lo - f_hi) <= 1e-12 and abs(fx - f_lo) <= 1e-12:
            warnings.warn("objective is flat over the d_rs range", BoundaryOptimumWarning, stacklevel=2)
        else:
            warnings.warn("no interior optimum; returning the best endpoint", BoundaryOptimumWarning, stacklevel=2)
        d_best = lo if f_lo >= f_hi else hi
        return StatorOptimum(d_best, best_end, False, (f_lo, f_hi))
    return StatorOptimum(x, fx, True, (f_lo, f_hi))


def _bounding_radius(config: ArrayConfig, plane_z: float) -> float:
    r = 0.0
    for mag in config.magnets:
        if abs(mag.position[2] - plane_z) > mag.length / 2:
            continue
        half = mag.dimensions[0] / 2 * (np.sqrt(2) if mag.shape == "cuboid" else 1.0)
        r = max(r, np.hypot(mag.position[0], mag.position[1]) + half)
    return r


def dc_field_pattern(config: ArrayConfig, radius: float, gammas, plane_z: float = 0.0, resolution=(1, 1, 1)):
    """Radial dc field around the array at rest, on the plane ``z = plane_z``.

    Returns an ``(n, 2)`` array of ``(gamma, B_radial)`` rows.
    """
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    if radius <= _bounding_radius(config, plane_z):
        raise GeometryError("receiver circle intersects the array")
    pts = np.column_stack([radius * np.cos(gammas), radius * np.sin(gammas), np.full_like(gammas, plane_z)])
    B = field_of_magnets(config.magnets, pts, resolution)
    radial = B[:, 0] * np.cos(gammas) + B[:, 1] * np.sin(gammas)
    return np.column_stack([gammas, radial])


def kinetic_energy_for_field(amplitudes, inertias):
    """Small-angle proxies: kinetic energy ``sum I theta^2`` and field ``sum theta``."""
    a = np.asarray(amplitudes, dtype=float)
    inert = np.broadcast_to(np.asarray(inertias, dtype=float), a.shape)
    return float(np.sum(inert * a**2)), float(np.sum(a))


def array_model(config: ArrayConfig, damping: float = 5e-5, neighbor_depth: int | None = 2,
                kappa3: Sequence[float] | float = 0.0) -> ArrayModel:
    """Dynamics plant for a configured array.

    Every rotor gets the same share of the coil coupling, signed by its rest
    dipole direction so opposed modules are driven in antiphase.
    """
    K = build_stiffness_matrix(config, neighbor_depth)
    signs = np.array([np.sign(r.magnetization_axis[1]) or 1.0 for r in config.rotors])
    moments = signs * np.array([magnetic_moment(r) for r in config.rotors])
    return ArrayModel(K, config.inertias, damping, moments, signs, kappa3)
