import pytest

from optotactile.calibration.dataset import generate_dataset, generate_vertical_dataset
from optotactile.sensor import FingerPhysicalModel

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def finger():
    return FingerPhysicalModel()


@pytest.fixture(scope="session")
def main_data(finger):
    return generate_dataset(finger, seed=0)


@pytest.fixture(scope="session")
def vertical_data(finger):
    return generate_vertical_dataset(finger, seed=0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
