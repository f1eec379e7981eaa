import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_collection_modifyitems(config, items):
    # acceptance checks run last so they can read the outcomes of the property suites
    items.sort(key=lambda item: item.path.name == "test_acceptance.py")


def pytest_runtest_logreport(report):
    from helpers import OUTCOMES

    if report.when == "call" or report.outcome != "passed":
        OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    from helpers import CRITERIA

    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA.values()):
            terminalreporter.write_line(line)
