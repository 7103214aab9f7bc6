import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gelfand.models import build_disk_model, build_interval_model, build_rectangle_model, make_partition

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def interval64():
    return build_interval_model(math.pi, 64)


@pytest.fixture(scope="session")
def interval_partition(interval64):
    model, _ = interval64
    return make_partition(model, 0.2)


@pytest.fixture(scope="session")
def square16():
    return build_rectangle_model(math.pi, math.pi, 16, spacing=0.05)


@pytest.fixture(scope="session")
def disk16():
    return build_disk_model(1.0, 16, radial_cells=60, angular_cells=180, boundary_nodes=360)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{label:<40} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
