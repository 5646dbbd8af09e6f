import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hestonbarrier.model import MarketState, build_model, flat_barrier  # noqa: E402

# reference setup: m = 2, theta(t) = 0.1 e^{-0.3 t}, sigma(t) = 0.3 e^{-0.2 t}
REF = dict(m=2.0, theta0=0.1, sigma0=0.3, rho0=-0.7, theta_k=0.3, sigma_k=0.2, r=0.02, q=0.01)
SPOT, V0, BARRIER = 60.0, 0.5, 40.0


def ref_model(maturity: float, segments: int = 10, constant: bool = False):
    p = dict(REF)
    if constant:
        p["theta_k"] = p["sigma_k"] = 0.0
    return build_model(maturity=maturity, segments=segments, **p)


@pytest.fixture
def market():
    return MarketState(SPOT, V0)


@pytest.fixture
def barrier():
    return flat_barrier(BARRIER)


# one line per acceptance criterion, repeated at the end of the run
CRITERIA: dict[int, str] = {}


def report(number: int, ok: bool, detail: str) -> bool:
    line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
