import numpy as np
import pytest

from biot_schwarz import ScaledParameters, build_spaces, build_uniform_mesh, refine


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_space(n, k, *, with_parent=False):
    mesh = refine(build_uniform_mesh(n // 2)) if with_parent else build_uniform_mesh(n)
    return build_spaces(mesh, k)


@pytest.fixture
def unit_params():
    return ScaledParameters(1.0, 1.0, 0.0)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance-criterion lines recorded by ``test_acceptance``."""
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        terminalreporter.write_line(mod.RESULTS.get(n, f"CRITERION {n:>2}: NOT RUN"))
