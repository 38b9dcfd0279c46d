import numpy as np
import pytest

from shellspec.geometry import GeometrySpec, build_quadrature


@pytest.fixture(scope="session")
def sphere1():
    return build_quadrature(GeometrySpec("sphere", {}, 1))


@pytest.fixture(scope="session")
def sphere2():
    return build_quadrature(GeometrySpec("sphere", {}, 2))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def unit_normals(n, seed=3):
    v = np.random.default_rng(seed).normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
