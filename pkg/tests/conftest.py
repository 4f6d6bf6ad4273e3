import time
from dataclasses import dataclass

import numpy as np
import pytest

from stimrwa.evolution import SelfInteractionParams, evolve_self_interaction
from stimrwa.selfint import analyze

# filled by the acceptance tests, printed once at the end of the session
CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@dataclass
class SelfIntCase:
    run: object
    analysis: object
    seconds: float


def _selfint_case(alpha: float, n_modes: int) -> SelfIntCase:
    t0 = time.perf_counter()
    run = evolve_self_interaction(SelfInteractionParams(alpha=alpha), rtol=1e-12, atol=1e-14)
    an = analyze(run, n_modes, radius=2, degenerate=True)
    return SelfIntCase(run, an, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def selfint_symmetric():
    return _selfint_case(1.0, 5)


@pytest.fixture(scope="session")
def selfint_asymmetric():
    return _selfint_case(0.8, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
