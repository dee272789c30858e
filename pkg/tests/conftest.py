import numpy as np
import pytest

from agentfe.dataset import from_arrays


@pytest.fixture
def product_dataset():
    """y = a*b + noise over columns a, b, c (the end-to-end synthetic)."""
    rng = np.random.default_rng(7)
    a, b, c = rng.normal(size=(3, 500))
    y = a * b + rng.normal(size=500) * 0.1
    return from_arrays({"a": a, "b": b, "c": c}, y, "regression", name="synthetic_product")


@pytest.fixture
def small_regression():
    rng = np.random.default_rng(11)
    a, b, c = rng.normal(size=(3, 120))
    y = a * b + 0.5 * c + rng.normal(size=120) * 0.1
    return from_arrays({"a": a, "b": b, "c": c}, y, "regression", name="small")


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
