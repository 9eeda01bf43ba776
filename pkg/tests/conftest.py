import numpy as np
import pytest

from koopman_roa.config import load_config
from koopman_roa.lyapunov import build_candidate
from koopman_roa.pipeline import Pipeline
from koopman_roa.spectral import (
    SystemDef,
    jacobian_spectrum,
    principal_eigenfunction,
    verified_spectrum,
)

EX1_TERMS = [[{"k": [1], "c": -1.0}, {"k": [2], "c": 2.0}]]
VDP_TERMS = [[{"k": [0, 1], "c": -1.0}],
             [{"k": [1, 0], "c": 1.0}, {"k": [0, 1], "c": -0.2}, {"k": [2, 1], "c": 1.8}]]

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def closed_phi(x):
    """Exact principal eigenfunction of xdot = -x + 2x^2."""
    return x / (1.0 - 2.0 * x)


@pytest.fixture(scope="session")
def ex1():
    return SystemDef.from_terms(EX1_TERMS, [1.0], "example1")


@pytest.fixture(scope="session")
def vdp():
    return SystemDef.from_terms(VDP_TERMS, [1.0, 1.0], "vdp")


@pytest.fixture(scope="session")
def ex1_spec(ex1):
    return verified_spectrum(jacobian_spectrum(ex1), 200)


@pytest.fixture(scope="session")
def vdp_spec(vdp):
    return verified_spectrum(jacobian_spectrum(vdp), 200)


@pytest.fixture(scope="session")
def ex1_phi(ex1, ex1_spec):
    return principal_eigenfunction(ex1, ex1_spec, 0, 200)


@pytest.fixture(scope="session")
def vdp_phi(vdp, vdp_spec):
    return principal_eigenfunction(vdp, vdp_spec, vdp_spec.groups[0][0], 200)


@pytest.fixture(scope="session")
def ex1_cand(ex1_phi, ex1_spec):
    return build_candidate([ex1_phi], ex1_spec, 70)


@pytest.fixture(scope="session")
def vdp_cand(vdp_phi, vdp_spec):
    return build_candidate([vdp_phi], vdp_spec, 70)


@pytest.fixture(scope="session")
def ex1_pipeline():
    return Pipeline(load_config("example1"))


@pytest.fixture(scope="session")
def vdp_pipeline():
    return Pipeline(load_config("vdp"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
