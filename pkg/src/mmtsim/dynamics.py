"""Time-domain simulation of the coupled rotor/coil equations and stepped-sine sweeps.

Equations of motion, per rotor ``k``::

    I_k theta_k'' = -b_k theta_k' - tau_k(theta) - Gamma_k cos(theta_k) i_d
    L_c i_d'      = v_d(t) - R_c i_d + sum_k Gamma_k cos(theta_k) theta_k'

The induced emf enters the loop as a source, which makes the pair energy
consistent: the drive power splits into coil heating and mechanical damping.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from mmtsim import _kernels as kern
from mmtsim.circuit import CircuitParams
from mmtsim.errors import (
    InputError,
    InsufficientDataError,
    IntegrationDivergedError,
    SamplingError,
    SingularityError,
)
from mmtsim.magnetics import MU0, Coil
from mmtsim.resonator import MotionState, ResonatorModel

TORQUE_LAWS = ("cubic_fit", "exact_dipole", "grid_table", "linear")
_LAW_CODES = {
    "cubic_fit": kern.LAW_CUBIC,
    "exact_dipole": kern.LAW_SINE,
    "grid_table": kern.LAW_TABLE,
    "linear": kern.LAW_LINEAR,
}
DEFAULT_STEPS_PER_PERIOD = 200
DEFAULT_RECEIVER_DISTANCE = 1000.0
CONVERGENCE_TOL = 1e-4
CONVERGENCE_CYCLES = 10
MAX_PERIODS = 2000
MIN_PERIODS = 20

TIMESERIES_COLUMNS = ("time_s", "theta_rad", "theta_dot_rad_s", "i_d_A", "v_d_V", "b_rx_T")
SWEEP_COLUMNS = ("freq_hz", "theta_rms_rad", "b_rx_rms_T", "p_avg_W", "converged")


@dataclass(frozen=True)
class DriveSignal:
    """Sinusoidal or on-off keyed drive voltage.

    ``v_rms`` is the rms level while the drive is on and ``freq`` the carrier
    in rad/s. For OOK, ``bits`` gate the carrier at ``bitrate`` bit/s.
    """

    kind: str
    v_rms: float
    freq: float
    duration: float
    bits: tuple = ()
    bitrate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sine", "ook"):
            raise InputError(f"unknown waveform {self.kind!r}")
        if self.v_rms < 0:
            raise InputError("drive level must be non-negative")
        if self.freq <= 0:
            raise InputError("drive frequency must be positive")
        if self.duration <= 0:
            raise InputError("drive duration must be positive")
        if self.kind == "ook":
            if self.bitrate <= 0:
                raise InputError("bitrate must be positive")
            if not self.bits:
                raise InputError("OOK drive needs at least one bit")
            object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))

    @classmethod
    def sine(cls, v_rms: float, freq: float, duration: float) -> "DriveSignal":
        return cls("sine", v_rms, freq, duration)

    def voltage(self, t):
        t = np.asarray(t, dtype=float)
        v = np.sqrt(2) * self.v_rms * np.sin(self.freq * t)
        if self.kind == "ook":
            idx = np.floor(t * self.bitrate).astype(int)
            bits = np.asarray(self.bits)
            inside = (idx >= 0) & (idx < len(bits))
            gate = np.where(inside, bits[np.clip(idx, 0, len(bits) - 1)], 0)
            v = v * gate
        return v


@dataclass(frozen=True)
class ArrayModel:
    """Multi-rotor plant: linearized coupling matrix plus per-rotor restoring laws.

    ``stiffness`` holds the full linear stiffness; its diagonal is the linear
    self-stiffness used by the restoring law of each rotor.
    """

    stiffness: np.ndarray
    inertias: np.ndarray
    damping: np.ndarray
    moments: np.ndarray
    gammas: np.ndarray | None = None
    kappa3: np.ndarray | None = None

    def __post_init__(self):
        k = np.atleast_2d(np.asarray(self.stiffness, dtype=float))
        n = k.shape[0]
        if k.shape != (n, n):
            raise InputError("stiffness matrix must be square")
        object.__setattr__(self, "stiffness", k)
        for name in ("inertias", "damping", "moments"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            object.__setattr__(self, name, arr)
        if np.any(self.inertias <= 0):
            raise InputError("inertias must be positive")
        g = np.ones(n) if self.gammas is None else self.gammas
        object.__setattr__(self, "gammas", np.broadcast_to(np.asarray(g, float), (n,)).copy())
        k3 = np.zeros(n) if self.kappa3 is None else self.kappa3
        object.__setattr__(self, "kappa3", np.broadcast_to(np.asarray(k3, float), (n,)).copy())

    @property
    def size(self) -> int:
        return self.stiffness.shape[0]


@dataclass
class TimeSeries:
    time: np.ndarray
    theta: np.ndarray
    theta_dot: np.ndarray
    i_d: np.ndarray
    v_d: np.ndarray
    b_rx: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.time[1] - self.time[0])

    def final_state(self):
        """``(MotionState, i_d)`` at the last sample (first rotor for arrays)."""
        th = np.atleast_1d(self.theta[-1])
        om = np.atleast_1d(self.theta_dot[-1])
        return MotionState(float(th[0]), float(om[0]), float(self.time[-1])), float(self.i_d[-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        theta = self.theta if self.theta.ndim == 1 else self.theta.mean(axis=1)
        theta_dot = self.theta_dot if self.theta_dot.ndim == 1 else self.theta_dot.mean(axis=1)
        w.writerow(TIMESERIES_COLUMNS)
        for row in zip(self.time, theta, theta_dot, self.i_d, self.v_d, self.b_rx):
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()


@dataclass(frozen=True)
class SteadyState:
    theta_rms: float
    b_rx_rms: float
    p_avg: float
    converged: bool
    theta_max: float = float("nan")


@dataclass
class SweepPoint:
    freq: float  # Hz
    theta_rms: float
    b_rx_rms: float
    p_avg: float
    converged: bool
    theta_max: float = float("nan")
    periods: int = 0


@dataclass
class SweepResult:
    direction: str
    v_rms: float
    points: list = field(default_factory=list)

    @property
    def freqs(self) -> np.ndarray:
        return np.array([p.freq for p in self.points])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])

    def peak(self, quantity: str = "b_rx_rms") -> SweepPoint:
        vals = self.column(quantity)
        return self.points[int(np.argmax(np.abs(vals)))]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for p in self.points:
            w.writerow([_fmt(p.freq), _fmt(p.theta_rms), _fmt(p.b_rx_rms), _fmt(p.p_avg), int(p.converged)])
        return buf.getvalue()


def _fmt(x) -> str:
    return format(float(x), ".12g")


@dataclass(frozen=True)
class _Plant:
    inertia: np.ndarray
    damping: np.ndarray
    coupling: np.ndarray  # off-diagonal only
    k1: np.ndarray
    k3: np.ndarray
    gamma: np.ndarray
    moments: np.ndarray

    @property
    def omega0(self) -> float:
        k = self.coupling + np.diag(self.k1)
        evals = np.linalg.eigvals(np.linalg.solve(np.diag(self.inertia), k))
        return float(np.sqrt(np.max(np.abs(evals))))


def _plant(model, circuit: CircuitParams) -> _Plant:
    if isinstance(model, ResonatorModel):
        one = np.ones(1)
        return _Plant(
            one * model.inertia,
            one * model.damping,
            np.zeros((1, 1)),
            one * model.kappa1,
            one * model.kappa3,
            one * circuit.gamma0,
            one * model.rotor_moment,
        )
    k = model.stiffness
    off = k - np.diag(np.diag(k))
    return _Plant(
        model.inertias,
        model.damping,
        off,
        np.diag(k).copy(),
        model.kappa3,
        model.gammas * circuit.gamma0,
        model.moments,
    )


def make_torque_table(samples):
    """Odd-extended cubic spline through ``(theta, tau)`` samples.

    Returns breakpoints and scipy-style piecewise coefficients.
    """
    data = np.asarray(samples, dtype=float)
    theta = np.concatenate([data[:, 0], -data[:, 0]])
    tau = np.concatenate([data[:, 1], -data[:, 1]])
    uniq, inv = np.unique(np.round(theta, 14), return_inverse=True)
    if len(uniq) < 4:
        raise InputError("torque table needs at least two distinct non-zero angles")
    avg = np.bincount(inv, weights=tau) / np.bincount(inv)
    spline = CubicSpline(uniq, avg)
    return np.ascontiguousarray(spline.x), np.ascontiguousarray(spline.c)


def received_total_field(theta, i_d, m_r, coil: Coil, r_x: float, d_cr: float):
    """x-directed field at the receiver: rotor carrier plus direct coil leakage."""
    if r_x <= 0 or d_cr + r_x <= 0:
        raise SingularityError("receiver distance must be positive")
    mech = -MU0 * np.asarray(m_r) * np.sin(theta) / (2 * np.pi * r_x**3)
    if np.ndim(mech) > np.ndim(i_d):
        mech = np.sum(mech, axis=-1)
    direct = MU0 * coil.turns * coil.area * np.asarray(i_d) / (2 * np.pi * (d_cr + r_x) ** 3)
    return mech + direct


class Simulator:
    """Stateful stepping of one plant; successive ``run`` calls continue in time."""

    def __init__(
        self,
        model,
        circuit: CircuitParams,
        torque_law: str = "cubic_fit",
        table=None,
        small_angle: bool = False,
        r_x: float = DEFAULT_RECEIVER_DISTANCE,
    ):
        if torque_law not in TORQUE_LAWS:
            raise InputError(f"unknown torque law {torque_law!r}")
        if circuit.coil.inductance <= 0:
            raise InputError("coil inductance must be positive")
        self.model = model
        self.circuit = circuit
        self.plant = _plant(model, circuit)
        self.law = _LAW_CODES[torque_law]
        if torque_law == "grid_table":
            if table is None:
                raise InputError("grid_table torque law needs a torque table")
            th = np.asarray(table, dtype=float)[:, 0]
            if np.any(np.diff(th) <= 0):
                raise InputError("torque table angles must be strictly increasing")
            self.sx, self.sc = make_torque_table(table)
        else:
            self.sx = np.zeros(2)
            self.sc = np.zeros((4, 1))
        self.small_angle = bool(small_angle)
        self.r_x = r_x
        n = self.plant.inertia.shape[0]
        self.theta = np.zeros(n)
        self.theta_dot = np.zeros(n)
        self.current = 0.0
        self.time = 0.0

    def set_state(self, theta=0.0, theta_dot=0.0, current=0.0, time=0.0):
        n = self.plant.inertia.shape[0]
        self.theta = np.broadcast_to(np.asarray(theta, float), (n,)).copy()
        self.theta_dot = np.broadcast_to(np.asarray(theta_dot, float), (n,)).copy()
        self.current = float(current)
        self.time = float(time)

    def run(self, n_steps: int, dt: float, v_amp=0.0, w=1.0, phase=0.0, t_ref=0.0,
            bits=None, bitrate=0.0) -> TimeSeries:
        n = self.plant.inertia.shape[0]
        out_th = np.empty((n_steps + 1, n))
        out_om = np.empty((n_steps + 1, n))
        out_i = np.empty(n_steps + 1)
        out_v = np.empty(n_steps + 1)
        bits_arr = np.zeros(1, dtype=np.int64) if bits is None else np.asarray(bits, dtype=np.int64)
        p = self.plant
        status = kern.integrate_rk4(
            self.theta, self.theta_dot, self.current, self.time, dt, n_steps,
            p.inertia, p.damping, p.coupling, self.law, p.k1, p.k3, self.sx, self.sc,
            p.gamma, self.small_angle, self.circuit.coil.resistance,
            self.circuit.coil.inductance, v_amp, w, phase, t_ref, bits_arr, float(bitrate),
            out_th, out_om, out_i, out_v,
        )
        if status >= 0:
            raise IntegrationDivergedError(status, self.time + status * dt)
        time = self.time + dt * np.arange(n_steps + 1)
        self.theta = out_th[-1].copy()
        self.theta_dot = out_om[-1].copy()
        self.current = float(out_i[-1])
        self.time = float(time[-1])
        theta = out_th[:, 0] if n == 1 else out_th
        theta_dot = out_om[:, 0] if n == 1 else out_om
        b_rx = received_total_field(
            out_th if n > 1 else out_th[:, 0], out_i, p.moments if n > 1 else p.moments[0],
            self.circuit.coil, self.r_x, self.circuit.d_cr,
        )
        return TimeSeries(time, theta, theta_dot, out_i, out_v, b_rx)


def simulate(
    model,
    circuit: CircuitParams,
    drive: DriveSignal | None,
    torque_law: str = "cubic_fit",
    initial: MotionState | None = None,
    i0: float = 0.0,
    table=None,
    small_angle: bool = False,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    duration: float | None = None,
    r_x: float = DEFAULT_RECEIVER_DISTANCE,
) -> TimeSeries:
    """Integrate the coupled equations from ``initial`` over the drive duration.

    With ``drive=None`` the coil is shorted (zero source voltage) and
    ``duration`` must be given; the step is then set from the plant's
    highest linear natural frequency.
    """
    if steps_per_period < 20:
        raise InputError("need at least 20 steps per period")
    sim = Simulator(model, circuit, torque_law, table, small_angle, r_x)
    initial = initial or MotionState()
    sim.set_state(initial.theta, initial.theta_dot, i0, initial.time)
    if drive is None:
        if duration is None:
            raise InputError("free-decay simulation needs a duration")
        w_ref = sim.plant.omega0
        v_amp, w, bits, bitrate = 0.0, w_ref, None, 0.0
    else:
        duration = drive.duration if duration is None else duration
        w_ref = max(drive.freq, sim.plant.omega0)
        v_amp = np.sqrt(2) * drive.v_rms
        w = drive.freq
        bits = drive.bits if drive.kind == "ook" else None
        bitrate = drive.bitrate if drive.kind == "ook" else 0.0
    dt = 2 * np.pi / w_ref / steps_per_period
    n_steps = int(np.ceil(duration / dt - 1e-9))
    return sim.run(n_steps, dt, v_amp, w, 0.0, 0.0, bits, bitrate)


def _samples_per_period(series: TimeSeries, drive_freq: float) -> int:
    period = 2 * np.pi / drive_freq
    n = int(round(period / series.dt))
    if n < 20:
        raise SamplingError("steady-state analysis needs at least 20 samples per drive period")
    return n


def cycle_rms(x, n_per: int) -> np.ndarray:
    """Rms of each complete cycle, counting back from the end of ``x``."""
    x = np.asarray(x, dtype=float)
    n_cyc = (len(x) - 1) // n_per
    tail = x[len(x) - n_cyc * n_per:]
    return np.sqrt(np.mean(tail.reshape(n_cyc, n_per) ** 2, axis=1))


def fundamental_amplitude(x, t, omega) -> float:
    """Amplitude of the ``omega`` component of ``x`` over whole cycles."""
    x = np.asarray(x, dtype=float)
    c = 2.0 / len(x) * np.sum(x * np.exp(-1j * omega * np.asarray(t)))
    return float(abs(c))


def is_converged(rms_values, tol: float = CONVERGENCE_TOL, cycles: int = CONVERGENCE_CYCLES) -> bool:
    r = np.asarray(rms_values, dtype=float)
    if len(r) < cycles + 1:
        return False
    # spread over the whole window, so slow monotone drift cannot accumulate
    window = r[-(cycles + 1):]
    scale = max(float(np.mean(np.abs(window))), 1e-300)
    return bool((window.max() - window.min()) / scale < tol)


def steady_state(series: TimeSeries, drive_freq: float, window_cycles: int = CONVERGENCE_CYCLES) -> SteadyState:
    """Cycle-windowed steady response at the end of ``series``.

    ``b_rx_rms`` is the rms of the carrier (fundamental) component only.
    """
    n_per = _samples_per_period(series, drive_freq)
    n_cyc = (len(series.time) - 1) // n_per
    if n_cyc < MIN_PERIODS:
        raise InsufficientDataError(f"series covers {n_cyc} drive periods; need {MIN_PERIODS}")
    theta = series.theta if series.theta.ndim == 1 else series.theta.mean(axis=1)
    rms = cycle_rms(theta, n_per)
    converged = is_converged(rms)
    k = min(window_cycles, n_cyc)
    sl = slice(len(series.time) - k * n_per, len(series.time))
    b_amp = fundamental_amplitude(series.b_rx[sl], series.time[sl], drive_freq)
    p_avg = float(np.mean(series.v_d[sl] * series.i_d[sl]))
    theta_rms = float(np.sqrt(np.mean(theta[sl] ** 2)))
    theta_max = float(np.max(np.abs(theta[len(theta) - n_per:])))
    return SteadyState(theta_rms, b_amp / np.sqrt(2), p_avg, converged, theta_max)


def frequency_sweep(
    model,
    circuit: CircuitParams,
    f_start: float,
    f_stop: float,
    n_points: int,
    direction: str = "up",
    v_rms: float | None = None,
    torque_law: str = "cubic_fit",
    table=None,
    small_angle: bool = False,
    carryover: bool = True,
    steps_per_period: int = DEFAULT_STEPS_PER_PERIOD,
    max_periods: int = MAX_PERIODS,
    chunk_periods: int = CONVERGENCE_CYCLES,
    tol: float = CONVERGENCE_TOL,
    r_x: float = DEFAULT_RECEIVER_DISTANCE,
) -> SweepResult:
    """Stepped-sine sweep between ``f_start`` and ``f_stop`` (Hz).

    ``direction`` orders the frequencies ascending (``up``) or descending
    (``down``). With ``carryover`` the final state at one frequency seeds the
    next, and the drive phase is continuous across steps.
    """
    if f_start == f_stop:
        raise InputError("sweep needs distinct start and stop frequencies")
    if direction not in ("up", "down"):
        raise InputError("direction must be 'up' or 'down'")
    if n_points < 2:
        raise InputError("sweep needs at least two points")
    lo, hi = sorted((f_start, f_stop))
    freqs = np.linspace(lo, hi, n_points)
    if direction == "down":
        freqs = freqs[::-1]
    v = circuit.drive_v_rms if v_rms is None else v_rms
    sim = Simulator(model, circuit, torque_law, table, small_angle, r_x)
    result = SweepResult(direction, v)
    phase = 0.0
    for f in freqs:
        w = 2 * np.pi * f
        if not carryover:
            sim.set_state()
            phase = 0.0
        dt = 2 * np.pi / w / steps_per_period
        t_ref = sim.time
        rms_hist = []
        periods = 0
        last = None
        while periods < max_periods:
            chunk = min(chunk_periods, max_periods - periods)
            series = sim.run(chunk * steps_per_period, dt, np.sqrt(2) * v, w, phase, t_ref)
            periods += chunk
            th = series.theta if series.theta.ndim == 1 else series.theta.mean(axis=1)
            rms_hist.extend(cycle_rms(th, steps_per_period))
            last = series
            if periods >= MIN_PERIODS and is_converged(rms_hist, tol):
                break
        phase = (phase + w * (sim.time - t_ref)) % (2 * np.pi)
        k = min(CONVERGENCE_CYCLES, (len(last.time) - 1) // steps_per_period)
        sl = slice(len(last.time) - k * steps_per_period, len(last.time))
        theta = last.theta if last.theta.ndim == 1 else last.theta.mean(axis=1)
        b_amp = fundamental_amplitude(last.b_rx[sl], last.time[sl], w)
        result.points.append(
            SweepPoint(
                freq=float(f),
                theta_rms=float(np.sqrt(np.mean(theta[sl] ** 2))),
                b_rx_rms=b_amp / np.sqrt(2),
                p_avg=float(np.mean(last.v_d[sl] * last.i_d[sl])),
                converged=is_converged(rms_hist, tol),
                theta_max=float(np.max(np.abs(theta[len(theta) - steps_per_period:]))),
                periods=periods,
            )
        )
    return result


def stacked_peaks(sweeps: Sequence[SweepResult], quantity: str = "b_rx_rms"):
    """``(v_rms, peak frequency, theta_max at peak)`` for each sweep."""
    out = []
    for s in sweeps:
        p = s.peak(quantity)
        out.append((s.v_rms, p.freq, p.theta_max))
    return out
