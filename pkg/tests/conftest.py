import numpy as np
import pytest

from risjcas.model import ScenarioConfig


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def small_config():
    return ScenarioConfig.build(n_tx=4, n_rf=2, n_sc=2, n_users=2, n_ris=4, n_angles=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance suite verdicts, one line per suite, at the end of the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    cache = getattr(mod, "_cache", None)
    if not cache:
        return
    terminalreporter.section("acceptance criteria")
    for res in cache.values():
        terminalreporter.write_line(res.line())
