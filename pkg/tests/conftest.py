import numpy as np
import pytest

from mmtsim import config, resonator

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def default_cfg():
    return config.RunConfig()


@pytest.fixture(scope="session")
def grid_fit(default_cfg):
    """Default single-rotor model (grid-quadrature fit) and its torque curve."""
    return config.resonator_model(default_cfg)


@pytest.fixture(scope="session")
def grid_resonator(grid_fit):
    return grid_fit[0]


@pytest.fixture(scope="session")
def default_circuit(default_cfg, grid_resonator):
    return config.circuit_params(default_cfg, grid_resonator.rotor_moment)


@pytest.fixture(scope="session")
def dipole_resonator():
    return resonator.dipole_model()


SWEEP_LEVELS = (2.0, 8.0, 16.0, 24.0)


@pytest.fixture(scope="session")
def stiffening_sweeps(grid_resonator, default_circuit):
    """``{v_rms: (up, down)}`` stepped-sine sweeps of the default model, 165-205 Hz."""
    from mmtsim.dynamics import frequency_sweep

    out = {}
    for v in SWEEP_LEVELS:
        cp = default_circuit.with_(drive_v_rms=v)
        out[v] = tuple(frequency_sweep(grid_resonator, cp, 165.0, 205.0, 81, d, v) for d in ("up", "down"))
    return out


@pytest.fixture
def acceptance():
    """Record a criterion outcome; the lines are echoed in the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def rel(a, b):
    return abs(a - b) / abs(b)

