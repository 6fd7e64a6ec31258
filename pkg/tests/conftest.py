from pathlib import Path

import numpy as np
import pytest

from yamabe_oc import build_from_matrices, build_symmetric_sphere

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def s3_512():
    return build_symmetric_sphere(3, 512)


@pytest.fixture(scope="session")
def s3_64():
    return build_symmetric_sphere(3, 64)


@pytest.fixture(scope="session")
def toy():
    return build_from_matrices(
        DATA / "toy_stiffness.txt", DATA / "toy_curvature_mass.txt", DATA / "toy_weights.txt", 3
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def record(label, ok, detail):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        assert ok, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
