from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hicontrast import assemble_forms, classical_model, default_model, homogenize, laminate_model
from hicontrast.oracles import load_fixtures

settings.register_profile(
    "numerics",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
    derandomize=True,
)
settings.load_profile("numerics")

FIXTURES = Path(__file__).parent / "fixtures" / "oracles.json"


@pytest.fixture(scope="session")
def oracle():
    return load_fixtures(FIXTURES)


@pytest.fixture(scope="session")
def default32():
    forms = assemble_forms(default_model(32))
    cells, hom = homogenize(forms)
    return forms, cells, hom


@pytest.fixture(scope="session")
def default16():
    forms = assemble_forms(default_model(16))
    cells, hom = homogenize(forms)
    return forms, cells, hom


@pytest.fixture(scope="session")
def classical16():
    forms = assemble_forms(classical_model(16))
    cells, hom = homogenize(forms)
    return forms, cells, hom


@pytest.fixture(scope="session")
def laminate32():
    forms = assemble_forms(laminate_model(32))
    cells, hom = homogenize(forms)
    return forms, cells, hom


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines are echoed in the terminal summary even without -s
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
