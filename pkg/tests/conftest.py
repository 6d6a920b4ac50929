import numpy as np
import pytest

from pupilholo.optics import OpticalConfig, PupilRanges, PupilState


@pytest.fixture
def blue():
    """440 nm, 8 um pitch, f = 400 mm: a 22 mm eyebox."""
    return OpticalConfig((440e-9,), 8e-6, (64, 64), 0.4)


@pytest.fixture
def tiny():
    return OpticalConfig((440e-9,), 8e-6, (16, 16), 0.4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pupils_inside(rng, n, eyebox, d_min=0.3, d_max=0.9):
    out = []
    for _ in range(n):
        d = rng.uniform(d_min, d_max) * eyebox
        r = (eyebox - d) / 2
        out.append(PupilState(tuple(rng.uniform(-r, r, 2)), rng.uniform(-5e-3, 15e-3), d))
    return out


HW_RANGES = PupilRanges(0.0, 15e-3, 8e-3, 20e-3)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
