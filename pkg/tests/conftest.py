import hypothesis
import numpy as np
import pytest

from prioropt.modelzoo import SoftmaxLinearModel, random_mlp

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def hyperplane():
    """Binary linear model with boundary x1 = 0; class 0 on the positive side."""
    return SoftmaxLinearModel(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.zeros(2))


@pytest.fixture
def mlp():
    return random_mlp(8, 16, 3, np.random.default_rng(7), scale=1.5)
