"""Compiled inner loops for the dipole-grid quadrature."""

import numpy as np
from numba import njit

_K = 1e-7  # mu0 / 4pi


@njit(cache=True)
def grid_torque_z(pos_a, mom_a, pivot, pos_b, mom_b):
    """z-torque on cell set A about ``pivot`` from the fields of cell set B."""
    tau = 0.0
    for i in range(pos_a.shape[0]):
        px = pos_a[i, 0]
        py = pos_a[i, 1]
        pz = pos_a[i, 2]
        mx = mom_a[i, 0]
        my = mom_a[i, 1]
        mz = mom_a[i, 2]
        fx = 0.0
        fy = 0.0
        bx = 0.0
        by = 0.0
        for j in range(pos_b.shape[0]):
            rx = px - pos_b[j, 0]
            ry = py - pos_b[j, 1]
            rz = pz - pos_b[j, 2]
            r2 = rx * rx + ry * ry + rz * rz
            r = np.sqrt(r2)
            inv_r = 1.0 / r
            ux = rx * inv_r
            uy = ry * inv_r
            uz = rz * inv_r
            nx = mom_b[j, 0]
            ny = mom_b[j, 1]
            nz = mom_b[j, 2]
            mu = mx * ux + my * uy + mz * uz
            nu = nx * ux + ny * uy + nz * uz
            mn = mx * nx + my * ny + mz * nz
            c3 = _K * inv_r * inv_r * inv_r
            bx += c3 * (3.0 * ux * nu - nx)
            by += c3 * (3.0 * uy * nu - ny)
            c4 = 3.0 * c3 * inv_r
            fx += c4 * (mu * nx + nu * mx + mn * ux - 5.0 * mu * nu * ux)
            fy += c4 * (mu * ny + nu * my + mn * uy - 5.0 * mu * nu * uy)
        ax = px - pivot[0]
        ay = py - pivot[1]
        tau += ax * fy - ay * fx + mx * by - my * bx
    return tau


LAW_CUBIC = 0
LAW_SINE = 1
LAW_TABLE = 2
LAW_LINEAR = 3


@njit(cache=True)
def _table_eval(x, sx, sc):
    m = sx.shape[0]
    j = np.searchsorted(sx, x) - 1
    if j < 0:
        j = 0
    elif j > m - 2:
        j = m - 2
    dx = x - sx[j]
    return ((sc[0, j] * dx + sc[1, j]) * dx + sc[2, j]) * dx + sc[3, j]


@njit(cache=True)
def _drive(t, v_amp, w, phase, t_ref, bits, bitrate):
    gate = 1.0
    if bitrate > 0.0:
        k = int(np.floor(t * bitrate))
        if k < 0 or k >= bits.shape[0]:
            gate = 0.0
        else:
            gate = float(bits[k])
    return v_amp * gate * np.sin(w * (t - t_ref) + phase)


@njit(cache=True)
def _rhs(t, th, om, cur, dth, dom, inertia, damping, kmat, law, k1, k3, sx, sc,
         gamma, small_angle, res, ind, v_amp, w, phase, t_ref, bits, bitrate):
    n = th.shape[0]
    emf = 0.0
    for a in range(n):
        x = th[a]
        if law == 0:
            tau = k1[a] * x + k3[a] * x * x * x
        elif law == 1:
            tau = k1[a] * np.sin(x)
        elif law == 2:
            tau = _table_eval(x, sx, sc)
        else:
            tau = k1[a] * x
        for b in range(n):
            if b != a:
                tau += kmat[a, b] * th[b]
        c = 1.0 if small_angle else np.cos(x)
        tau += gamma[a] * c * cur
        emf += gamma[a] * c * om[a]
        dth[a] = om[a]
        dom[a] = -(damping[a] * om[a] + tau) / inertia[a]
    v = _drive(t, v_amp, w, phase, t_ref, bits, bitrate)
    return (v - res * cur + emf) / ind


@njit(cache=True)
def integrate_rk4(th0, om0, i0, t0, dt, n_steps, inertia, damping, kmat, law, k1, k3,
                  sx, sc, gamma, small_angle, res, ind, v_amp, w, phase, t_ref, bits,
                  bitrate, out_th, out_om, out_i, out_v):
    """Classical fixed-step RK4 for rotor angles, rates and coil current.

    Writes ``n_steps + 1`` samples (initial state included) into the output
    arrays. Returns -1 on success or the index of the first non-finite step.
    """
    n = th0.shape[0]
    th = th0.copy()
    om = om0.copy()
    cur = i0
    k1t = np.empty(n)
    k1o = np.empty(n)
    k2t = np.empty(n)
    k2o = np.empty(n)
    k3t = np.empty(n)
    k3o = np.empty(n)
    k4t = np.empty(n)
    k4o = np.empty(n)
    tt = np.empty(n)
    to = np.empty(n)
    for a in range(n):
        out_th[0, a] = th[a]
        out_om[0, a] = om[a]
    out_i[0] = cur
    out_v[0] = _drive(t0, v_amp, w, phase, t_ref, bits, bitrate)
    h = dt
    for s in range(n_steps):
        t = t0 + s * h
        k1i = _rhs(t, th, om, cur, k1t, k1o, inertia, damping, kmat, law, k1, k3, sx, sc,
                   gamma, small_angle, res, ind, v_amp, w, phase, t_ref, bits, bitrate)
        for a in range(n):
            tt[a] = th[a] + 0.5 * h * k1t[a]
            to[a] = om[a] + 0.5 * h * k1o[a]
        k2i = _rhs(t + 0.5 * h, tt, to, cur + 0.5 * h * k1i, k2t, k2o, inertia, damping, kmat,
                   law, k1, k3, sx, sc, gamma, small_angle, res, ind, v_amp, w, phase, t_ref,
                   bits, bitrate)
        for a in range(n):
            tt[a] = th[a] + 0.5 * h * k2t[a]
            to[a] = om[a] + 0.5 * h * k2o[a]
        k3i = _rhs(t + 0.5 * h, tt, to, cur + 0.5 * h * k2i, k3t, k3o, inertia, damping, kmat,
                   law, k1, k3, sx, sc, gamma, small_angle, res, ind, v_amp, w, phase, t_ref,
                   bits, bitrate)
        for a in range(n):
            tt[a] = th[a] + h * k3t[a]
            to[a] = om[a] + h * k3o[a]
        k4i = _rhs(t + h, tt, to, cur + h * k3i, k4t, k4o, inertia, damping, kmat, law, k1,
                   k3, sx, sc, gamma, small_angle, res, ind, v_amp, w, phase, t_ref, bits,
                   bitrate)
        finite = True
        for a in range(n):
            th[a] += h / 6.0 * (k1t[a] + 2.0 * k2t[a] + 2.0 * k3t[a] + k4t[a])
            om[a] += h / 6.0 * (k1o[a] + 2.0 * k2o[a] + 2.0 * k3o[a] + k4o[a])
            if not (np.isfinite(th[a]) and np.isfinite(om[a])):
                finite = False
            out_th[s + 1, a] = th[a]
            out_om[s + 1, a] = om[a]
        cur += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
        if not (finite and np.isfinite(cur)):
            return s + 1
        out_i[s + 1] = cur
        out_v[s + 1] = _drive(t + h, v_amp, w, phase, t_ref, bits, bitrate)
    return -1
