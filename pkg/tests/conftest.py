from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from phaseless.geometry import Bump, PotentialGrid, build_scene

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def scene():
    return build_scene(1.0, 1.5, 2.5, 0.2, (1.0, 5.0))


@pytest.fixture(scope="session")
def phantom_bumps():
    return (
        Bump((0.25, -0.15, 0.1), 0.55, 0.05),
        Bump((-0.35, 0.3, -0.15), 0.45, 0.04),
    )


@pytest.fixture(scope="session")
def q_small(scene, phantom_bumps):
    return PotentialGrid.from_bumps(scene, phantom_bumps, 24)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    def record(label: str, passed: bool, detail: str) -> bool:
        line = f"criterion {label}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
