import numpy as np
import pytest

from isac_scatter.em import Grid2D, build_frequency_grid, uniform_circular_array
from isac_scatter.forward import SensingSystem, make_pilots


def small_system(side=10, extent=0.5, f_c=3e9, delta_f=50e6, K=3, T=3, n_tx=12, n_rx=12, radius=2.0, seed=0):
    grid = Grid2D(side, extent)
    freqs = build_frequency_grid(f_c, delta_f, K)
    array = uniform_circular_array(radius, n_tx, n_rx, grid)
    return SensingSystem(grid, array, freqs, make_pilots(n_tx, T, K, seed))


def disk_chi(grid, radius, value, center=(0.0, 0.0)):
    xy = grid.centers - np.asarray(center)
    chi = np.zeros(grid.N, dtype=complex)
    chi[np.hypot(xy[:, 0], xy[:, 1]) <= radius] = value
    return chi


@pytest.fixture
def system():
    return small_system()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one verdict line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
