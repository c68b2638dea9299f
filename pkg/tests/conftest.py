import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


AC_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[AC_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: criterion(name, passed, detail)."""
    results = request.config.stash[AC_RESULTS]

    def record(name, passed, detail):
        line = f"{name}: {'PASS' if passed else 'FAIL'}  {detail}"
        results[name] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(AC_RESULTS, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for name in sorted(results, key=lambda n: int(n[2:])):
            terminalreporter.write_line(results[name])
