import numpy as np
import pytest

from mmtsim import circuit as ct
from mmtsim.errors import CouplingError, DomainError, SingularityError
from mmtsim.resonator import ResonatorModel

MODEL = ResonatorModel(8.292, 0.0, 1.652e-6, 5e-5, 9.65)


def params(**kw):
    base = ct.CircuitParams(ct.default_coil(), 0.06, 1e-2, 1.0)
    return base.with_(**kw)


def test_gyrator_from_geometry():
    g = ct.gyrator_coefficient(9.65, ct.default_coil(), 0.06)
    assert g == pytest.approx(3.04e-3, rel=2e-3)
    assert ct.gyrator_coefficient(9.65, ct.default_coil(), np.inf) == 0.0
    with pytest.raises(SingularityError):
        ct.gyrator_coefficient(9.65, ct.default_coil(), 0.0)
    cp = ct.CircuitParams.from_geometry(ct.default_coil(), 9.65, 0.06)
    assert cp.gamma0 == pytest.approx(g)


def test_impedance_limits():
    cp = params()
    z0 = ct.total_impedance(0.0, cp, MODEL).z_total
    assert z0 == pytest.approx(cp.coil.resistance)
    w = 1234.0
    zd = ct.total_impedance(w, params(gamma0=0.0), MODEL).z_total
    assert zd == pytest.approx(1.0 + 1j * w * 5e-3)
    z = ct.total_impedance(MODEL.omega0, cp, MODEL).z_total
    assert z.real == pytest.approx(1.0 + 1e-4 / 5e-5, rel=1e-12)


def test_impedance_passive():
    w = np.linspace(1, 5000, 2000)
    z = ct.total_impedance(w, params(), MODEL).z_total
    assert np.all(z.real >= 1.0 - 1e-12)


def test_displacement_transfer():
    cp = params()
    w = np.linspace(0.9, 1.1, 4001) * MODEL.omega0
    h = np.abs(ct.displacement_transfer(w, cp, MODEL))
    assert abs(w[np.argmax(h)] / MODEL.omega0 - 1) < 0.05
    heavy = ResonatorModel(8.292, 0.0, 1.652e-6, 1e6, 9.65)
    assert abs(ct.displacement_transfer(MODEL.omega0, cp, heavy)) < 1e-9
    with pytest.raises(CouplingError):
        ct.displacement_transfer(MODEL.omega0, params(gamma0=0.0), MODEL)
    with pytest.raises(DomainError):
        ct.displacement_transfer(0.0, cp, MODEL)


@pytest.mark.parametrize("b", [1e-5, 3e-5, 1e-4])
@pytest.mark.parametrize("r", [0.1, 1.0, 2.0])
def test_transfer_peak_within_five_percent(b, r):
    m = ResonatorModel(8.292, 0.0, 1.652e-6, b, 9.65)
    cp = params(coil=ct.default_coil().__class__(170, 2e-3, r, 5e-3))
    w = np.linspace(0.8, 1.2, 8001) * m.omega0
    h = np.abs(ct.displacement_transfer(w, cp, m))
    assert abs(w[np.argmax(h)] / m.omega0 - 1) < 0.05


def test_coupled_resonance():
    assert ct.coupled_resonance(params(gamma0=0.0), MODEL) == MODEL.omega0
    shift = ct.coupled_resonance(params(), MODEL) / MODEL.omega0 - 1
    assert shift == pytest.approx(0.5 * (1e-4 / 5e-3) / 8.292, rel=1e-3)
    assert shift == pytest.approx(0.0012, abs=1e-4)
    g = [ct.coupled_resonance(params(gamma0=x), MODEL) for x in (1e-3, 1e-2, 3e-2)]
    assert g[0] < g[1] < g[2]
    coil = ct.default_coil()
    ls = [
        ct.coupled_resonance(params(coil=coil.__class__(170, 2e-3, 1.0, L)), MODEL) for L in (1e-3, 5e-3, 2e-2)
    ]
    assert ls[0] > ls[1] > ls[2]


def test_power_uncoupled():
    p = ct.average_power_at_resonance(params(gamma0=0.0), MODEL, 2.0)
    x = MODEL.omega0 * 5e-3
    assert p == pytest.approx(4.0 * 1.0 / (1.0 + x**2), rel=1e-12)


def test_power_forms_agree():
    cp = params()
    p_closed = ct.average_power_at_resonance(cp, MODEL)
    i_rms = ct.current_rms_at_resonance(cp, MODEL)
    r_eff = 1.0 + cp.gamma0**2 / MODEL.damping
    assert i_rms**2 * r_eff == pytest.approx(p_closed, rel=1e-9)
    assert ct.average_power(MODEL.omega0, cp, MODEL) == pytest.approx(p_closed, rel=1e-9)


def test_power_small_damping_limit():
    cp = params()
    ps = []
    for b in (1e-8, 1e-9, 1e-10):
        m = ResonatorModel(8.292, 0.0, 1.652e-6, b, 9.65)
        p = ct.average_power_at_resonance(cp, m)
        assert p == pytest.approx(b / cp.gamma0**2, rel=0.02)
        ps.append(p)
    assert ps[0] > ps[1] > ps[2]


def test_power_dip_below_transfer_peak(grid_resonator, default_circuit):
    w_dip = ct.power_dip_frequency(default_circuit, grid_resonator)
    w = np.linspace(0.9, 1.1, 20001) * grid_resonator.omega0
    w_peak = w[np.argmax(np.abs(ct.displacement_transfer(w, default_circuit, grid_resonator)))]
    assert np.isfinite(w_dip)
    assert w_dip < w_peak


def test_power_dip_absent_without_coupling():
    assert np.isnan(ct.power_dip_frequency(params(gamma0=0.0), MODEL))
