import numpy as np
import pytest

from sim_spline.eigensystem import Interval, build_eigensystem, estimate_density
from sim_spline.model import FitConfig, fit
from sim_spline.simulation import SimSetting, gen_dataset


def uniform_density(lo=0.0, hi=1.0, grid_size=256):
    """Exact uniform density on [lo, hi] packaged as a DensityEstimate."""
    from sim_spline.eigensystem import DensityEstimate
    grid = np.linspace(lo, hi, grid_size)
    vals = np.full(grid_size, 1.0 / (hi - lo))
    return DensityEstimate(Interval(lo, hi), grid, vals, 0.0, np.nan, 1.0)


@pytest.fixture(scope="session")
def unit_eig3():
    return build_eigensystem(uniform_density(), 1.0, m=3, num_basis=128, num_eigen=40)


@pytest.fixture(scope="session")
def unit_eig2():
    return build_eigensystem(uniform_density(), 1.0, m=2, num_basis=128, num_eigen=40)


@pytest.fixture(scope="session")
def sample_eig():
    gen = np.random.default_rng(7)
    s = gen.normal(0.2, 0.5, 300)
    dens = estimate_density(s, Interval(s.min() - 0.05, s.max() + 0.05))
    return build_eigensystem(dens, 1.0, m=3, num_basis=64, num_eigen=20)


@pytest.fixture(scope="session")
def sim_data():
    data, truth = gen_dataset(SimSetting(n=150, seed=11))
    return data, truth


@pytest.fixture(scope="session")
def sim_fit(sim_data):
    data, _ = sim_data
    return fit(data, FitConfig(seed=3, v=15))


@pytest.fixture(scope="session")
def boot_sample(sim_data, sim_fit):
    from sim_spline.inference import BootstrapConfig, run_bootstrap
    from sim_spline.simulation import JOINT_X0, JOINT_Z0
    data, _ = sim_data
    return run_bootstrap(data, sim_fit, BootstrapConfig(B=100, seed=4), x0=JOINT_X0,
                         z0=JOINT_Z0)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
