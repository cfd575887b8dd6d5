import warnings

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_obstacle_warning():
    # configs with a noise-driven obstacle warn on load; that is expected here
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="problem.S0: sigma")
        yield


# one line per acceptance criterion, printed after the run
CRITERIA = {}


@pytest.fixture
def criterion():
    def record(number, passed, text):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {text}"
        CRITERIA[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
