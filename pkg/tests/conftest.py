import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uavplan.scenario import Discretization, SensorNode, generate_random, default_scenario  # noqa: E402


def small_scenario(positions, demand=2e7, radius=60.0, segments=12, battery=1e5):
    """Default constants with small discs so the trajectory problems stay tiny."""
    return default_scenario(
        np.asarray(positions, float), demand=demand, coverage_radius=radius, battery=battery, segments=segments
    )


@pytest.fixture(scope="session")
def line3():
    return small_scenario([(2800.0, 2500.0), (3100.0, 2600.0), (3300.0, 2400.0)])


@pytest.fixture(scope="session")
def random20():
    return generate_random(20, 5000.0, 1e8, seed=1)


@pytest.fixture(scope="session")
def pto20(random20):
    from uavplan.planner import pto

    return pto(random20)


@pytest.fixture(scope="session")
def random8():
    return generate_random(8, 5000.0, 1e8, seed=3)


@pytest.fixture(scope="session")
def pto8(random8):
    from uavplan.planner import pto

    return pto(random8)


__all__ = ["small_scenario", "SensorNode", "Discretization"]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: int(k.split()[0])):
        ok, detail = results[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
