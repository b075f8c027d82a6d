"""Magnetostatic kernels for permanent-magnet rotors, stators and drive coils.

Magnets are uniformly magnetized bodies whose long axis is the global z axis.
A magnet can be treated as a single point dipole or split into a grid of
dipole cells; the grid quadrature stands in for a magnetostatic field solver
when computing near-field restoring torque curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from mmtsim._kernels import grid_torque_z
from mmtsim.errors import GeometryError, InputError, SingularityError

MU0 = 4e-7 * np.pi
NDFEB_DENSITY = 7500.0  # kg/m^3
DEFAULT_RESOLUTION = (8, 8, 16)

_UNIT_TOL = 1e-12


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    return a


@dataclass(frozen=True)
class Magnet:
    """A uniformly magnetized cuboid or cylinder with its long axis along z.

    ``dimensions`` is ``(l_x, l_y, l_z)`` for a cuboid and ``(diameter, length)``
    for a cylinder.
    """

    shape: str
    dimensions: tuple
    residual_flux_density: float
    magnetization_axis: tuple = (0.0, 1.0, 0.0)
    position: tuple = (0.0, 0.0, 0.0)
    role: str = "rotor"
    density: float = NDFEB_DENSITY

    def __post_init__(self):
        if self.shape not in ("cuboid", "cylinder"):
            raise InputError(f"unknown magnet shape {self.shape!r}")
        expected = 3 if self.shape == "cuboid" else 2
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != expected:
            raise InputError(f"{self.shape} needs {expected} dimensions, got {len(dims)}")
        if min(dims) <= 0:
            raise InputError(f"magnet dimensions must be positive, got {dims}")
        if self.residual_flux_density <= 0:
            raise InputError("residual flux density must be positive")
        if self.density <= 0:
            raise InputError("density must be positive")
        if self.role not in ("rotor", "stator"):
            raise InputError(f"unknown magnet role {self.role!r}")
        axis = _vec3(self.magnetization_axis)
        if abs(np.linalg.norm(axis) - 1.0) > _UNIT_TOL:
            raise InputError(f"magnetization axis must be a unit vector, got {axis}")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "magnetization_axis", tuple(axis))
        object.__setattr__(self, "position", tuple(_vec3(self.position)))

    @classmethod
    def cuboid(cls, side, length, br=1.48, **kw) -> "Magnet":
        """Square cross-section bar of side ``side`` and axial length ``length``."""
        return cls("cuboid", (side, side, length), br, **kw)

    @classmethod
    def cylinder(cls, diameter, length, br=1.48, **kw) -> "Magnet":
        return cls("cylinder", (diameter, length), br, **kw)

    @property
    def volume(self) -> float:
        if self.shape == "cuboid":
            lx, ly, lz = self.dimensions
            return lx * ly * lz
        d, lh = self.dimensions
        return np.pi * d * d / 4.0 * lh

    @property
    def length(self) -> float:
        return self.dimensions[-1]

    @property
    def moment(self) -> np.ndarray:
        """Point-dipole moment vector in A m^2."""
        return self.residual_flux_density * self.volume / MU0 * np.asarray(self.magnetization_axis)

    def moved(self, position=None, magnetization_axis=None) -> "Magnet":
        kw = {}
        if position is not None:
            kw["position"] = tuple(_vec3(position))
        if magnetization_axis is not None:
            kw["magnetization_axis"] = tuple(_vec3(magnetization_axis))
        return replace(self, **kw)


@dataclass(frozen=True)
class DipoleCell:
    moment: np.ndarray
    position: np.ndarray


@dataclass(frozen=True)
class Coil:
    """Drive coil. The field it produces is modelled as that of a point dipole."""

    turns: int
    area: float
    resistance: float
    inductance: float
    axis: tuple = (1.0, 0.0, 0.0)
    position: tuple = field(default=(-0.06, 0.0, 0.0))

    def __post_init__(self):
        if int(self.turns) != self.turns or self.turns < 1:
            raise InputError("coil needs a positive integer number of turns")
        if self.area <= 0 or self.resistance <= 0 or self.inductance <= 0:
            raise InputError("coil area, resistance and inductance must be positive")
        axis = _vec3(self.axis)
        if abs(np.linalg.norm(axis) - 1.0) > _UNIT_TOL:
            raise InputError("coil axis must be a unit vector")
        object.__setattr__(self, "axis", tuple(axis))
        object.__setattr__(self, "position", tuple(_vec3(self.position)))

    def distance_to(self, point) -> float:
        return float(np.linalg.norm(_vec3(point) - np.asarray(self.position)))


def rotation_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotor_moment(m_r: float, theta: float) -> np.ndarray:
    """Rotor moment ``M_r(-sin theta, cos theta, 0)`` for deflection ``theta`` about z."""
    return m_r * np.array([-np.sin(theta), np.cos(theta), 0.0])


def dipole_field(moment, r) -> np.ndarray:
    """Flux density (T) of a point dipole ``moment`` at offset ``r``.

    ``r`` may be a single 3-vector or an ``(n, 3)`` array of offsets.
    """
    m = np.asarray(moment, dtype=float)
    r = np.asarray(r, dtype=float)
    norm = np.linalg.norm(r, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise SingularityError("dipole field is singular at r = 0")
    rhat = r / norm
    mr = np.sum(rhat * m, axis=-1, keepdims=True)
    return MU0 / (4 * np.pi * norm**3) * (3 * rhat * mr - m)


def dipole_pair_interaction(m1, p1, m2, p2):
    """Force on dipole 1 and torque on dipole 1 due to dipole 2.

    The force is the gradient of ``m1 . B2`` at ``p1``; the force on dipole 2
    is its negative.
    """
    m1 = _vec3(m1)
    m2 = _vec3(m2)
    r = _vec3(p1) - _vec3(p2)
    dist = np.linalg.norm(r)
    if dist == 0:
        raise SingularityError("dipoles at coincident positions")
    u = r / dist
    a = m1 @ u
    b = m2 @ u
    force = 3 * MU0 / (4 * np.pi * dist**4) * (a * m2 + b * m1 + (m1 @ m2) * u - 5 * a * b * u)
    torque = np.cross(m1, dipole_field(m2, r))
    return force, torque


def interaction_energy(m1, p1, m2, p2) -> float:
    """Dipole-dipole interaction energy ``-m1 . B2(p1)``."""
    return float(-_vec3(m1) @ dipole_field(m2, _vec3(p1) - _vec3(p2)))


def coil_axial_field(coil: Coil, i_d: float, d: float) -> np.ndarray:
    """On-axis dipole-approximation field of the coil at distance ``d``."""
    if d <= 0:
        raise SingularityError("coil field requested at zero distance")
    mag = MU0 * coil.turns * coil.area * i_d / (2 * np.pi * d**3)
    return mag * np.asarray(coil.axis)


def _cuboid_cells(dims, n):
    lx, ly, lz = dims
    axes = [((np.arange(k) + 0.5) / k - 0.5) * L for k, L in zip(n, (lx, ly, lz))]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    vol = np.full(len(pts), lx * ly * lz / (n[0] * n[1] * n[2]))
    return pts, vol


def _cylinder_cells(dims, n):
    # n = (radial rings, azimuthal sectors, axial slices); rings have equal area
    diam, lh = dims
    nr, nphi, nz = n
    radius = diam / 2
    edges = radius * np.sqrt(np.arange(nr + 1) / nr)
    dphi = 2 * np.pi / nphi
    pts = []
    vols = []
    zs = ((np.arange(nz) + 0.5) / nz - 0.5) * lh
    ring_area = np.pi * radius**2 / nr
    sector = np.sin(dphi / 2) / (dphi / 2) if nphi > 1 else 0.0
    for k in range(nr):
        ra, rb = edges[k], edges[k + 1]
        rc = 2.0 / 3.0 * (rb**3 - ra**3) / (rb**2 - ra**2) * sector
        for j in range(nphi):
            phi = (j + 0.5) * dphi
            for z in zs:
                pts.append((rc * np.cos(phi), rc * np.sin(phi), z))
                vols.append(ring_area / nphi * lh / nz)
    return np.array(pts), np.array(vols)


def _cell_arrays(magnet: Magnet, resolution, angle=0.0):
    n = tuple(int(k) for k in resolution)
    if len(n) != 3 or min(n) < 1:
        raise InputError(f"resolution must be three integers >= 1, got {resolution}")
    if magnet.shape == "cuboid":
        pts, vol = _cuboid_cells(magnet.dimensions, n)
    else:
        pts, vol = _cylinder_cells(magnet.dimensions, n)
    rot = rotation_z(angle)
    axis = rot @ np.asarray(magnet.magnetization_axis)
    moments = np.outer(vol * magnet.residual_flux_density / MU0, axis)
    positions = pts @ rot.T + np.asarray(magnet.position)
    return positions, moments


def discretize_magnet(magnet: Magnet, resolution=DEFAULT_RESOLUTION, angle: float = 0.0):
    """Split ``magnet`` into dipole cells at the cell centroids.

    ``angle`` rigidly rotates the magnet about the z axis through its centroid.
    """
    positions, moments = _cell_arrays(magnet, resolution, angle)
    return [DipoleCell(m, p) for m, p in zip(moments, positions)]


def _cross_section(magnet: Magnet, angle: float) -> np.ndarray:
    if magnet.shape == "cuboid":
        hx, hy = magnet.dimensions[0] / 2, magnet.dimensions[1] / 2
        pts = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
    else:
        phi = np.linspace(0, 2 * np.pi, 48, endpoint=False)
        r = magnet.dimensions[0] / 2 / np.cos(np.pi / 48)  # circumscribed polygon
        pts = r * np.column_stack([np.cos(phi), np.sin(phi)])
    rot = rotation_z(angle)[:2, :2]
    return pts @ rot.T + np.asarray(magnet.position[:2])


def _polygons_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    for poly in (a, b):
        edges = np.roll(poly, -1, axis=0) - poly
        normals = np.column_stack([-edges[:, 1], edges[:, 0]])
        for nrm in normals:
            pa = a @ nrm
            pb = b @ nrm
            if pa.max() <= pb.min() or pb.max() <= pa.min():
                return False
    return True


def magnets_overlap(a: Magnet, b: Magnet, angle_a: float = 0.0) -> bool:
    za, zb = a.position[2], b.position[2]
    if abs(za - zb) >= (a.length + b.length) / 2:
        return False
    return _polygons_overlap(_cross_section(a, angle_a), _cross_section(b, 0.0))


def _fixed_cells(fixed: Sequence[Magnet], resolution):
    pos = []
    mom = []
    for mag in fixed:
        p, m = _cell_arrays(mag, resolution)
        pos.append(p)
        mom.append(m)
    return np.ascontiguousarray(np.vstack(pos)), np.ascontiguousarray(np.vstack(mom))


def grid_torque_curve(rotor: Magnet, fixed: Sequence[Magnet], thetas, resolution=DEFAULT_RESOLUTION):
    """Restoring torque on ``rotor`` versus deflection about z.

    Returns an ``(n, 2)`` array of ``(theta, tau)`` rows where ``tau`` is the
    restoring torque, positive when it opposes a positive deflection.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if np.any(np.abs(thetas) > np.pi / 2 + 1e-12):
        raise InputError("deflection samples must lie within +/- pi/2")
    if not fixed:
        return np.column_stack([thetas, np.zeros_like(thetas)])
    for theta in thetas:
        for mag in fixed:
            if magnets_overlap(rotor, mag, theta):
                raise GeometryError(f"rotor overlaps a fixed magnet at theta={theta:.4f} rad")
    fixed_pos, fixed_mom = _fixed_cells(fixed, resolution)
    pivot = np.asarray(rotor.position, dtype=float)
    taus = np.empty_like(thetas)
    for k, theta in enumerate(thetas):
        pos, mom = _cell_arrays(rotor, resolution, theta)
        taus[k] = -grid_torque_z(
            np.ascontiguousarray(pos), np.ascontiguousarray(mom), pivot, fixed_pos, fixed_mom
        )
    return np.column_stack([thetas, taus])


def point_dipole_torque_curve(rotor: Magnet, fixed: Sequence[Magnet], thetas):
    """Restoring torque with every magnet collapsed to a single dipole."""
    return grid_torque_curve(rotor, fixed, thetas, resolution=(1, 1, 1))


def two_stator_dipole_torque(m_r: float, m_s: float, d_rs: float, theta):
    """Exact point-dipole restoring torque from two coaxial stators.

    The stator field at the rotor is uniform, so the torque is
    ``(mu0 M_r M_s / (pi d^3)) sin(theta)``.
    """
    if d_rs <= 0:
        raise SingularityError("rotor-stator distance must be positive")
    return MU0 * m_r * m_s / (np.pi * d_rs**3) * np.sin(theta)


def grid_convergence_ratio(rotor, fixed, resolution=DEFAULT_RESOLUTION, theta=np.pi / 4):
    """Relative change of the torque at ``theta`` when every resolution axis doubles."""
    coarse = grid_torque_curve(rotor, fixed, [theta], resolution)[0, 1]
    fine = grid_torque_curve(rotor, fixed, [theta], tuple(2 * k for k in resolution))[0, 1]
    return abs(fine - coarse) / abs(fine)


def single_rotor_geometry(rotor_side=12.7e-3, stator_side=12.7e-3, length=50.8e-3, d_rs=16.5e-3, br=1.48):
    """Rotor at the origin between two coaxial stators on the y axis, all magnetized along +y."""
    rotor = Magnet.cuboid(rotor_side, length, br)
    stators = [
        Magnet.cuboid(stator_side, length, br, position=(0.0, y, 0.0), role="stator")
        for y in (d_rs, -d_rs)
    ]
    return rotor, stators


def field_of_magnets(magnets: Sequence[Magnet], points, resolution=(1, 1, 1)) -> np.ndarray:
    """Total flux density of ``magnets`` at ``points`` (shape ``(n, 3)``)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros_like(points)
    for mag in magnets:
        pos, mom = _cell_arrays(mag, resolution)
        for p, m in zip(pos, mom):
            total += dipole_field(m, points - p)
    return total
