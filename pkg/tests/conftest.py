import numpy as np
import pytest

from sasimg.config import Config
from sasimg.geometry import Attitude, BeamSpec, PlatformState
from sasimg.preprocess import pulse_compress
from sasimg.scenarios import centered_grid, point_target_config, simulate_from_config
from sasimg.waveform import Waveform


@pytest.fixture(scope="session")
def waveform():
    return Waveform(100e3, 20e3, 1e-3, 40e3)


@pytest.fixture(scope="session")
def point_config():
    return point_target_config()


@pytest.fixture(scope="session")
def point_dataset(point_config):
    """Raw 200-ping single-channel stripmap over one seafloor point."""
    return simulate_from_config(point_config)


@pytest.fixture(scope="session")
def point_compressed(point_dataset):
    return pulse_compress(point_dataset, point_dataset.waveform)


@pytest.fixture(scope="session")
def small_config():
    """40 pings, 2 channels; fast enough for many reconstructions."""
    return point_target_config(n_pings=40, channels=2, element_spacing_m=0.02,
                               ping_spacing_m=0.02, scatterers=[[0.4, 8.0, 0.0, 1.0]])


@pytest.fixture(scope="session")
def small_dataset(small_config):
    return simulate_from_config(small_config)


@pytest.fixture(scope="session")
def small_grid():
    return centered_grid((0.4, 8.0), 24, 0.02)


@pytest.fixture
def side_beam():
    return BeamSpec.side_looking(0.35, 1.2, 0.55)


@pytest.fixture
def level_state():
    return PlatformState(np.array([0.0, 0.0, -5.0]), np.array([1.0, 0.0, 0.0]), Attitude(),
                         np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))


@pytest.fixture
def default_config():
    return Config()


_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record one acceptance line; returns the pass flag for the caller to assert."""
    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _VERDICTS[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
