import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def laplace1():
    from otbounds import make_laplace_product
    return make_laplace_product(1)


@pytest.fixture(scope="session")
def power2():
    from otbounds import make_power_potential
    return make_power_potential(2, 1.5)


@pytest.fixture(scope="session")
def power2_map(power2):
    from otbounds import brenier_radial
    return brenier_radial(power2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run whatever the capture mode
_CRITERIA = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[name] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        outcome, secs = _CRITERIA[name]
        num, label = name[len("test_criterion_"):].split("_", 1)
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {int(num):2d} {tag}  {label.replace('_', ' ')}  ({secs:.1f}s)")
