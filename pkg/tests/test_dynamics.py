import csv
import io

import numpy as np
import pytest
from scipy.special import j1

from mmtsim import circuit as ct
from mmtsim import dynamics as dy
from mmtsim.errors import InputError, InsufficientDataError, IntegrationDivergedError, SamplingError
from mmtsim.magnetics import MU0, Coil
from mmtsim.resonator import MotionState, ResonatorModel, backbone_frequency, carrier_field_rms, dipole_model


def linear_of(model):
    return ResonatorModel(model.kappa1, 0.0, model.inertia, model.damping, model.rotor_moment)


def steady_run(model, cp, w, periods=400, spp=200, **kw):
    drive = dy.DriveSignal.sine(cp.drive_v_rms, w, periods * 2 * np.pi / w)
    series = dy.simulate(model, cp, drive, steps_per_period=spp, **kw)
    return series, dy.steady_state(series, w)


# drive signal ----------------------------------------------------------------


def test_drive_signal_validation():
    with pytest.raises(InputError):
        dy.DriveSignal("square", 1.0, 10.0, 1.0)
    with pytest.raises(InputError):
        dy.DriveSignal.sine(1.0, -10.0, 1.0)
    with pytest.raises(InputError):
        dy.DriveSignal("ook", 1.0, 10.0, 1.0, (), 5.0)


def test_drive_ook_gating():
    d = dy.DriveSignal("ook", 1.0, 2 * np.pi * 100, 0.6, (1, 0, 1), 5.0)
    t = np.array([0.0025, 0.3025, 0.5025, 0.7])
    v = d.voltage(t)
    assert v[0] == pytest.approx(np.sqrt(2))
    assert v[1] == 0.0
    assert v[2] == pytest.approx(np.sqrt(2))
    assert v[3] == 0.0


# integration -----------------------------------------------------------------


def test_free_decay_energy_non_increasing(grid_resonator, default_circuit):
    m = grid_resonator
    s = dy.simulate(m, default_circuit, None, initial=MotionState(np.radians(10), 0.0), duration=0.3)
    th, om, i = s.theta, s.theta_dot, s.i_d
    energy = 0.5 * m.inertia * om**2 + 0.5 * m.kappa1 * th**2 + 0.25 * m.kappa3 * th**4
    total = energy + 0.5 * default_circuit.coil.inductance * i**2
    assert np.all(np.diff(total) <= 1e-10 * total[0])
    assert total[-1] < 0.01 * total[0]
    n_per = int(round(2 * np.pi / m.omega0 / s.dt))
    peaks = dy.cycle_rms(th, n_per)
    assert np.all(np.diff(peaks) < 0)


def test_free_decay_needs_duration(grid_resonator, default_circuit):
    with pytest.raises(InputError):
        dy.simulate(grid_resonator, default_circuit, None)


def test_linear_steady_amplitude_matches_transfer(grid_resonator, default_circuit):
    lin = linear_of(grid_resonator)
    w = lin.omega0
    _, ss = steady_run(lin, default_circuit, w, torque_law="linear", small_angle=True)
    oracle = abs(ct.displacement_transfer(w, default_circuit, lin)) * default_circuit.drive_v_rms
    assert ss.converged
    assert ss.theta_rms == pytest.approx(oracle, rel=1e-2)
    p_oracle = ct.average_power(w, default_circuit, lin)
    assert ss.p_avg == pytest.approx(p_oracle, rel=1e-2)


@pytest.mark.parametrize("law", ["cubic_fit", "linear"])
def test_energy_audit(grid_resonator, default_circuit, law):
    cp = default_circuit.with_(drive_v_rms=12.0)
    w = 2 * np.pi * 180
    series, _ = steady_run(grid_resonator, cp, w, torque_law=law)
    n = 10 * int(round(2 * np.pi / w / series.dt))
    sl = slice(len(series.time) - n, len(series.time))
    p_in = np.mean(series.v_d[sl] * series.i_d[sl])
    p_out = np.mean(series.i_d[sl] ** 2 * cp.coil.resistance + grid_resonator.damping * series.theta_dot[sl] ** 2)
    assert p_in == pytest.approx(p_out, rel=1e-2)


def test_step_halving_changes_rms_below_1e4(grid_resonator, default_circuit):
    cp = default_circuit.with_(drive_v_rms=8.0)
    w = 2 * np.pi * 178
    _, a = steady_run(grid_resonator, cp, w, periods=300, spp=200)
    _, b = steady_run(grid_resonator, cp, w, periods=300, spp=400)
    assert abs(a.theta_rms - b.theta_rms) / b.theta_rms < 1e-4


def test_simulator_runs_continue_in_time(grid_resonator, default_circuit):
    sim = dy.Simulator(grid_resonator, default_circuit)
    sim.set_state(0.1)
    dt = 2 * np.pi / grid_resonator.omega0 / 200
    sim.run(500, dt, 1.0, 1000.0)
    second = sim.run(500, dt, 1.0, 1000.0)
    one = dy.Simulator(grid_resonator, default_circuit)
    one.set_state(0.1)
    full = one.run(1000, dt, 1.0, 1000.0)
    np.testing.assert_allclose(second.theta, full.theta[500:], rtol=1e-10, atol=1e-14)


def test_grid_table_law_reproduces_tabulated_cubic(grid_resonator, default_circuit):
    m = grid_resonator
    th = np.radians(np.arange(0, 91, 1.0))
    table = np.column_stack([th, m.torque(th)])
    w = 2 * np.pi * 176
    cp = default_circuit.with_(drive_v_rms=6.0)
    _, a = steady_run(m, cp, w, periods=200)
    _, b = steady_run(m, cp, w, periods=200, torque_law="grid_table", table=table)
    assert b.theta_rms == pytest.approx(a.theta_rms, rel=1e-4)
    with pytest.raises(InputError):
        dy.Simulator(m, default_circuit, "grid_table")


def test_grid_table_small_angle_frequency(grid_fit, default_circuit):
    model, curve = grid_fit
    s = dy.simulate(model, default_circuit.with_(gamma0=0.0), None, torque_law="grid_table", table=curve,
                    initial=MotionState(0.01, 0.0), duration=0.2)
    crossings = np.flatnonzero(np.diff(np.sign(s.theta)) > 0)
    f_sim = (len(crossings) - 1) / (s.time[crossings[-1]] - s.time[crossings[0]])
    near = np.abs(curve[:, 0]) < 0.02
    slope = np.polyfit(curve[near, 0], curve[near, 1], 1)[0]
    assert f_sim == pytest.approx(np.sqrt(slope / model.inertia) / (2 * np.pi), rel=5e-3)


def test_exact_dipole_law_vs_cubic_small_angle(default_circuit):
    m = dipole_model()
    w = m.omega0
    cp = default_circuit.with_(drive_v_rms=0.5)
    _, a = steady_run(m, cp, w, periods=300, torque_law="exact_dipole")
    _, b = steady_run(m, cp, w, periods=300, torque_law="cubic_fit")
    assert a.theta_rms < 0.05
    assert a.theta_rms == pytest.approx(b.theta_rms, rel=1e-3)


def test_divergence_detected(default_circuit):
    runaway = ResonatorModel(1.0, -1e6, 1e-6, 0.0, 1.0)
    with pytest.raises(IntegrationDivergedError):
        dy.simulate(runaway, default_circuit, None, initial=MotionState(1.0, 0.0), duration=0.5)


def test_unknown_law_and_coarse_steps(grid_resonator, default_circuit):
    with pytest.raises(InputError):
        dy.Simulator(grid_resonator, default_circuit, "quintic")
    with pytest.raises(InputError):
        dy.simulate(grid_resonator, default_circuit, dy.DriveSignal.sine(1.0, 1000.0, 0.1), steps_per_period=10)


def test_single_rotor_array_model_matches_resonator(grid_resonator, default_circuit):
    m = grid_resonator
    arr = dy.ArrayModel([[m.kappa1]], [m.inertia], m.damping, [m.rotor_moment], [1.0], [m.kappa3])
    drive = dy.DriveSignal.sine(4.0, 2 * np.pi * 176, 0.2)
    a = dy.simulate(m, default_circuit, drive)
    b = dy.simulate(arr, default_circuit, drive)
    np.testing.assert_allclose(a.theta, b.theta, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(a.b_rx, b.b_rx, rtol=1e-12, atol=1e-30)


# steady-state extraction -----------------------------------------------------


def synthetic(theta, t, i=None, v=None, m_r=9.65):
    i = np.zeros_like(t) if i is None else i
    v = np.zeros_like(t) if v is None else v
    coil = Coil(170, 2e-3, 1.0, 5e-3)
    b = dy.received_total_field(theta, i, m_r, coil, 1000.0, 0.06)
    return dy.TimeSeries(t, theta, np.gradient(theta, t), i, v, b)


def test_pure_sinusoid_rms():
    w = 2 * np.pi * 50
    t = np.arange(0, 40 * 2 * np.pi / w, 2 * np.pi / w / 200)
    t = np.append(t, t[-1] + t[1])
    ss = dy.steady_state(synthetic(0.3 * np.sin(w * t), t), w)
    assert ss.theta_rms == pytest.approx(0.3 / np.sqrt(2), rel=1e-6)
    assert ss.converged


def test_convergence_flips_after_settling():
    n_per = 200
    cycles = np.arange(300)
    rms = 1.0 - np.exp(-cycles / 20.0)
    flags = [dy.is_converged(rms[: k + 1]) for k in range(len(rms))]
    first = flags.index(True)
    assert not any(flags[:first])
    assert all(flags[first:])
    assert np.exp(-first / 20.0) < 1e-3
    x = np.repeat(rms, n_per) * np.sqrt(2) * np.sin(2 * np.pi * np.arange(len(rms) * n_per) / n_per)
    np.testing.assert_allclose(dy.cycle_rms(np.append(x, 0.0), n_per), rms, rtol=1e-9, atol=1e-15)


def test_carrier_fundamental_matches_bessel_oracle():
    w = 2 * np.pi * 170
    th_max = np.pi / 4
    t = np.arange(0, 40 * 200 + 1) * (2 * np.pi / w / 200)
    ss = dy.steady_state(synthetic(th_max * np.sin(w * t), t), w)
    bessel = MU0 * 9.65 * 2 * j1(th_max) / (2 * np.pi * 1000.0**3) / np.sqrt(2)
    assert ss.b_rx_rms == pytest.approx(bessel, rel=1e-6)
    assert ss.theta_max == pytest.approx(th_max, rel=1e-4)


@pytest.mark.parametrize("deg", [2.0, 5.0, 10.0])
def test_carrier_fundamental_matches_closed_form_small_angle(deg):
    w = 2 * np.pi * 170
    th_max = np.radians(deg)
    t = np.arange(0, 40 * 200 + 1) * (2 * np.pi / w / 200)
    ss = dy.steady_state(synthetic(th_max * np.sin(w * t), t), w)
    assert ss.b_rx_rms == pytest.approx(carrier_field_rms(9.65, th_max, 1000.0), rel=5e-3)


def test_steady_state_input_checks():
    w = 2 * np.pi * 50
    t = np.arange(0, 5 * 200 + 1) * (2 * np.pi / w / 200)
    with pytest.raises(InsufficientDataError):
        dy.steady_state(synthetic(np.sin(w * t), t), w)
    t = np.arange(0, 40 * 10 + 1) * (2 * np.pi / w / 10)
    with pytest.raises(SamplingError):
        dy.steady_state(synthetic(np.sin(w * t), t), w)


def test_received_total_field_terms():
    coil = Coil(170, 2e-3, 1.0, 5e-3)
    th = np.pi / 4
    mech = dy.received_total_field(th, 0.0, 9.65, coil, 1000.0, 0.06)
    assert mech == pytest.approx(-MU0 * 9.65 * np.sin(th) / (2 * np.pi * 1e9), rel=1e-12)
    assert mech == pytest.approx(-1.365e-15, rel=1e-3)
    coil_only = dy.received_total_field(0.0, 1.0, 9.65, coil, 1000.0, 0.06)
    assert coil_only == pytest.approx(MU0 * 170 * 2e-3 / (2 * np.pi * 1000.06**3), rel=1e-12)
    assert coil_only == pytest.approx(6.80e-17, rel=2e-3)
    assert abs(mech / coil_only) == pytest.approx(20.1, rel=0.01)
    both = dy.received_total_field(th, 1.0, 9.65, coil, 1000.0, 0.06)
    assert both == pytest.approx(mech + coil_only, rel=1e-12)


def test_timeseries_csv_columns(grid_resonator, default_circuit):
    s = dy.simulate(grid_resonator, default_circuit, dy.DriveSignal.sine(1.0, 1100.0, 0.01))
    rows = list(csv.reader(io.StringIO(s.to_csv())))
    assert tuple(rows[0]) == dy.TIMESERIES_COLUMNS
    assert len(rows) == len(s.time) + 1


# sweeps ----------------------------------------------------------------------


def test_stiffening_hysteresis_direction(stiffening_sweeps):
    for v, (up, down) in stiffening_sweeps.items():
        assert up.peak().freq >= down.peak().freq, v
    assert any(up.peak().freq > down.peak().freq for up, down in stiffening_sweeps.values())


def test_stiffening_peak_rises_with_drive(stiffening_sweeps):
    peaks = [up.peak().freq for _, (up, _) in sorted(stiffening_sweeps.items())]
    assert all(b > a for a, b in zip(peaks, peaks[1:]))


def test_backbone_tracking(stiffening_sweeps, grid_resonator):
    for up, _ in stiffening_sweeps.values():
        p = up.peak()
        f_bb = backbone_frequency(grid_resonator, p.theta_max) / (2 * np.pi)
        assert abs(p.freq / f_bb - 1) < 0.05


def test_sweep_points_converged(stiffening_sweeps):
    for up, down in stiffening_sweeps.values():
        assert all(p.converged for p in up.points + down.points)


def test_sweep_csv(stiffening_sweeps):
    up, _ = stiffening_sweeps[2.0]
    rows = list(csv.reader(io.StringIO(up.to_csv())))
    assert tuple(rows[0]) == dy.SWEEP_COLUMNS
    assert len(rows) == 82
    assert float(rows[1][0]) == 165.0


def test_softening_sweeps(default_circuit):
    m = dipole_model()
    peaks = []
    for v in (10.0, 80.0):
        cp = default_circuit.with_(drive_v_rms=v)
        up = dy.frequency_sweep(m, cp, 320, 365, 46, "up", v)
        down = dy.frequency_sweep(m, cp, 320, 365, 46, "down", v)
        assert down.peak().freq <= up.peak().freq
        peaks.append((up.peak().freq, down.peak().freq, down.peak().theta_max, up.peak().theta_max))
    assert peaks[1][1] < peaks[0][1]
    # the down-sweep rides the high-amplitude branch further
    assert peaks[1][2] > peaks[1][3]


def test_linear_sweeps_coincide(grid_resonator, default_circuit):
    lin = linear_of(grid_resonator)
    f0 = lin.omega0 / (2 * np.pi)
    kw = dict(torque_law="linear", small_angle=True)
    up = dy.frequency_sweep(lin, default_circuit, f0 - 5, f0 + 5, 21, "up", 1.0, **kw)
    down = dy.frequency_sweep(lin, default_circuit, f0 - 5, f0 + 5, 21, "down", 1.0, **kw)
    a, b = up.column("theta_rms"), down.column("theta_rms")[::-1]
    assert np.max(np.abs(a - b) / a) < 1e-3
    ff = np.linspace(f0 - 5, f0 + 5, 20001)
    f_peak = ff[np.argmax(np.abs(ct.displacement_transfer(2 * np.pi * ff, default_circuit, lin)))]
    assert abs(up.peak("theta_rms").freq - f_peak) <= 0.5 + 1e-9


def test_sweep_without_carryover_restarts(grid_resonator, default_circuit):
    res = dy.frequency_sweep(grid_resonator, default_circuit, 170, 172, 2, "up", 1.0, carryover=False)
    assert len(res.points) == 2
    assert all(p.periods >= dy.MIN_PERIODS for p in res.points)


def test_sweep_input_checks(grid_resonator, default_circuit):
    with pytest.raises(InputError):
        dy.frequency_sweep(grid_resonator, default_circuit, 170, 170, 5)
    with pytest.raises(InputError):
        dy.frequency_sweep(grid_resonator, default_circuit, 170, 180, 5, "sideways")


def test_stacked_peaks(stiffening_sweeps):
    rows = dy.stacked_peaks([up for up, _ in stiffening_sweeps.values()])
    assert len(rows) == len(stiffening_sweeps)
