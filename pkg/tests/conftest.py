import pytest
from hypothesis import HealthCheck, settings

from decoy4 import SourceConfig, SourceConfig3, SystemParams

# Fixtures used under @given are frozen dataclasses, so sharing them is safe.
settings.register_profile(
    "default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture]
)
settings.load_profile("default")

# Optimal parameters printed for 100 km, N = 1e9, omega = 2e-4.
OPT100_FOUR = dict(mu=0.47, v1=0.183, v2=0.32, p_mu=0.16, p_v1=0.407, p_v2=0.22, p_z=0.82)
OPT100_THREE = dict(mu=0.551, v=0.188, p_mu=0.127, p_v=0.599, p_z=0.669)
OPT100_RATE_FOUR = 1.53e-5
OPT100_RATE_THREE = 9.58e-6


@pytest.fixture
def cfg4():
    return SourceConfig.from_free(**OPT100_FOUR)


@pytest.fixture
def cfg3():
    return SourceConfig3.from_free(**OPT100_THREE)


@pytest.fixture
def sys100():
    return SystemParams(length_km=100.0, n_pulses=1e9)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Remember one acceptance verdict; all of them are printed after the run."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
