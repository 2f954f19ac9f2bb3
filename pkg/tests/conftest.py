import numpy as np
import pytest

from fairbary.instance import gen_example


@pytest.fixture(scope="session")
def ex1():
    return gen_example(1, 200)


@pytest.fixture(scope="session")
def ex2():
    return gen_example(2, 200)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        test_acceptance = mod
        terminalreporter.section("acceptance criteria")
        for k in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[k])
