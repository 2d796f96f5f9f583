import numpy as np
import pytest

from ztrobot.chain import FixedLink, Module, Revolute, RobotModel, build_rp120
from ztrobot.mechanism import ModuleParams


@pytest.fixture(scope="session")
def robot():
    return build_rp120(ModuleParams(), 0.2, 0.1, np.pi / 4, 0.25)


@pytest.fixture(scope="session")
def single_module():
    return RobotModel((Module(ModuleParams()),))


@pytest.fixture(scope="session")
def planar_3r():
    seg = []
    for length in (1.0, 0.8, 0.6):
        seg += [Revolute((0.0, 0.0, 1.0)), FixedLink(length, (1.0, 0.0, 0.0))]
    return RobotModel(tuple(seg), characteristic_length=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
