"""On-off keying over the resonator: encoding, lock-in envelope detection, decoding."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfiltfilt

from mmtsim.circuit import CircuitParams
from mmtsim.dynamics import DriveSignal, TimeSeries, simulate
from mmtsim.errors import (
    ConfigurationError,
    DecodeAmbiguousError,
    DomainError,
    InputError,
    InsufficientDataError,
    SamplingError,
)

MIN_CYCLES_PER_BIT = 10.0
MIN_SAMPLES_PER_CYCLE = 20
CUTOFF_RATIO = 0.1
MIN_CONTRAST = 0.2


@dataclass(frozen=True)
class BitStream:
    bits: tuple
    bitrate: float

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if not bits:
            raise InputError("bit stream must not be empty")
        if any(b not in (0, 1) for b in bits):
            raise InputError("bits must be 0 or 1")
        if self.bitrate <= 0:
            raise InputError("bitrate must be positive")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_string(cls, text: str, bitrate: float) -> "BitStream":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise InputError(f"bit string must contain only 0 and 1, got {text!r}")
        return cls(tuple(int(c) for c in text), bitrate)

    @classmethod
    def random(cls, n: int, bitrate: float, seed: int = 0) -> "BitStream":
        rng = np.random.default_rng(seed)
        return cls(tuple(int(b) for b in rng.integers(0, 2, n)), bitrate)

    def __len__(self):
        return len(self.bits)

    def __str__(self):
        return "".join(map(str, self.bits))

    @property
    def duration(self) -> float:
        return len(self.bits) / self.bitrate


@dataclass
class DemodResult:
    decoded: tuple
    envelope: np.ndarray
    threshold: float
    errors: int | None = None

    def to_json(self) -> str:
        return json.dumps(
            {"decoded": "".join(map(str, self.decoded)), "errors": self.errors, "threshold_T": self.threshold},
            sort_keys=True,
        )


def cycles_per_bit(carrier: float, bitrate: float) -> float:
    return carrier / (2 * np.pi) / bitrate


def encode_ook(bits: BitStream, v_on: float, carrier: float, tail: float = 0.0) -> DriveSignal:
    """Gate a ``sqrt(2) v_on sin(w t)`` carrier with the bit stream.

    ``tail`` extends the drive (switched off) past the last bit.
    """
    if v_on < 0:
        raise InputError("on-level voltage must be non-negative")
    cyc = cycles_per_bit(carrier, bits.bitrate)
    if cyc < MIN_CYCLES_PER_BIT * (1 - 1e-9):
        raise ConfigurationError(
            f"carrier gives {cyc:.2f} cycles per bit; at least {MIN_CYCLES_PER_BIT:g} required"
        )
    return DriveSignal("ook", v_on, carrier, bits.duration + tail, bits.bits, bits.bitrate)


def envelope_time_constant(inertia: float, damping: float) -> float:
    if damping <= 0:
        raise DomainError("envelope time constant needs positive damping")
    return 2 * inertia / damping


def extract_envelope(series: TimeSeries, carrier: float, cutoff_ratio: float = CUTOFF_RATIO, signal=None):
    """Lock-in amplitude of the received field at ``carrier``.

    The field is mixed with quadrature references, low-passed at
    ``cutoff_ratio * carrier`` with a zero-phase Butterworth filter, and the
    magnitude of the result returned as a peak amplitude.
    """
    x = series.b_rx if signal is None else np.asarray(signal, dtype=float)
    t = series.time
    dt = t[1] - t[0]
    per_cycle = 2 * np.pi / carrier / dt
    if per_cycle < MIN_SAMPLES_PER_CYCLE:
        raise SamplingError(f"{per_cycle:.1f} samples per carrier cycle; need {MIN_SAMPLES_PER_CYCLE}")
    fs = 1.0 / dt
    fc = cutoff_ratio * carrier / (2 * np.pi)
    sos = butter(4, fc, fs=fs, output="sos")
    if len(x) <= 3 * (2 * sos.shape[0] + 1):
        raise InsufficientDataError("series too short for envelope filtering")
    mixed = x * np.exp(-1j * carrier * t)
    base = sosfiltfilt(sos, mixed.real) + 1j * sosfiltfilt(sos, mixed.imag)
    return 2 * np.abs(base)


def decode_ook(
    envelope,
    time,
    bitrate: float,
    expected_length: int,
    reference=None,
    min_contrast: float = MIN_CONTRAST,
    sample_phase: float = 0.5,
) -> DemodResult:
    """Slice the envelope at each bit centre against a percentile-midpoint threshold."""
    env = np.asarray(envelope, dtype=float)
    time = np.asarray(time, dtype=float)
    if time[-1] - time[0] < (expected_length - 1 + sample_phase) / bitrate:
        raise InsufficientDataError("envelope shorter than the expected bit stream")
    lo, hi = np.percentile(env, [10, 90])
    if hi <= 0 or (hi - lo) < min_contrast * hi:
        raise DecodeAmbiguousError("envelope has no on/off contrast to threshold")
    threshold = 0.5 * (lo + hi)
    centres = time[0] + (np.arange(expected_length) + sample_phase) / bitrate
    samples = np.interp(centres, time, env)
    decoded = tuple(int(s > threshold) for s in samples)
    errors = None
    if reference is not None:
        ref = tuple(reference.bits if isinstance(reference, BitStream) else reference)
        errors = sum(a != b for a, b in zip(decoded, ref)) + abs(len(ref) - len(decoded))
    return DemodResult(decoded, env, float(threshold), errors)


def transmit(
    bits: BitStream,
    model,
    circuit: CircuitParams,
    v_on: float,
    carrier: float | None = None,
    torque_law: str = "cubic_fit",
    table=None,
    noise_rms: float = 0.0,
    seed: int | None = None,
    steps_per_period: int = 200,
):
    """Encode, simulate and demodulate ``bits``; returns ``(DemodResult, series)``.

    ``noise_rms`` adds white Gaussian noise (T) to the received field before
    demodulation.
    """
    w = model.omega0 if carrier is None else carrier
    drive = encode_ook(bits, v_on, w)
    series = simulate(model, circuit, drive, torque_law, table=table, steps_per_period=steps_per_period)
    signal = series.b_rx
    if noise_rms > 0:
        rng = np.random.default_rng(seed)
        signal = signal + rng.normal(0.0, noise_rms, size=signal.shape)
    env = extract_envelope(series, w, signal=signal)
    result = decode_ook(env, series.time, bits.bitrate, len(bits), reference=bits)
    return result, series


def fit_decay_constant(time, envelope, t_start: float, t_stop: float) -> float:
    """Exponential time constant of the envelope between ``t_start`` and ``t_stop``."""
    time = np.asarray(time)
    env = np.asarray(envelope)
    sel = (time >= t_start) & (time <= t_stop) & (env > 0)
    if sel.sum() < 3:
        raise InsufficientDataError("not enough envelope samples in the fit window")
    slope, _ = np.polyfit(time[sel], np.log(env[sel]), 1)
    return float(-1.0 / slope)


def fit_ringup_constant(time, envelope, t_on: float, t_stop: float, steady: float | None = None) -> float:
    """Time constant of ``A (1 - exp(-(t - t_on)/lambda))`` ring-up."""
    time = np.asarray(time)
    env = np.asarray(envelope)
    if steady is None:
        steady = float(env[(time > t_stop - 0.05 * (t_stop - t_on)) & (time <= t_stop)].mean())
    gap = steady - env
    sel = (time >= t_on) & (time <= t_stop) & (gap > 0.02 * steady)
    if sel.sum() < 3:
        raise InsufficientDataError("not enough envelope samples in the fit window")
    slope, _ = np.polyfit(time[sel] - t_on, np.log(gap[sel]), 1)
    return float(-1.0 / slope)
