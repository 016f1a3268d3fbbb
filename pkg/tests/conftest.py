import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_pmf(rng, k, full_support=True):
    w = rng.random(k) + (1e-3 if full_support else 0.0)
    return w / w.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get("acceptance_lines", None) if hasattr(config, "stash") else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
