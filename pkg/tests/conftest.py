import numpy as np
import pytest
from hypothesis import settings

from spinlab import validate_mixture

settings.register_profile("spinlab", deadline=None, max_examples=60)
settings.load_profile("spinlab")

PURE2 = validate_mixture([0.0, 1.0])
PURE3 = validate_mixture([0.0, 0.0, 1.0])
MIXED = validate_mixture([1.0, 1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=[PURE2, PURE3, MIXED], ids=["pure2", "pure3", "mixed111"])
def mixture(request):
    return request.param


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
