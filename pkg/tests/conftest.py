import math

import numpy as np
import pytest

from surreal.manifold import ComplexField


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rand_field(rng, shape, log_sigma=1.0):
    return ComplexField(rng.normal(0, log_sigma, shape), rng.uniform(-math.pi, math.pi, shape))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
