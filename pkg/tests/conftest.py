import numpy as np
import pytest

from rtdswipt.eh_model import bundled_model, parse_model, to_monotone
from rtdswipt.metrics import NoiseModel

# Three-segment curve whose second rising branch climbs above the first peak.
SYNTHETIC_N3 = """
name = synthetic_n3
power_unit = mW
n_segments = 3
rho_breakpoints = 1.0, 1.5, 4.0
B = 1.0, 0.2, 1.5
alpha = 1.5, 2.0, 1.5
beta = 0.8, 1.0, 0.5
theta = 2.0, 10.0, 1.0
"""


@pytest.fixture(scope="session")
def reference():
    return bundled_model("reference")


@pytest.fixture(scope="session")
def improved_irev():
    return bundled_model("improved_irev")


@pytest.fixture(scope="session")
def improved_ubr():
    return bundled_model("improved_ubr")


@pytest.fixture(scope="session")
def synthetic3():
    return parse_model(SYNTHETIC_N3)


@pytest.fixture(scope="session")
def synthetic3_monotone(synthetic3):
    return to_monotone(synthetic3)


@pytest.fixture
def noise():
    return NoiseModel(1e-8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --------------------------------------------------------------------------
# Acceptance report: one PASS/FAIL line per criterion in the terminal summary

_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance_note(request):
    """Attach a short detail string (margins, timings) to the criterion's report line."""
    notes = _ACCEPTANCE.setdefault(request.node.nodeid, {"outcome": None, "notes": []})["notes"]
    return notes.append


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    entry = _ACCEPTANCE.setdefault(report.nodeid, {"outcome": None, "notes": []})
    if report.when == "call" or report.failed:
        entry["outcome"] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    rows = [(k, v) for k, v in _ACCEPTANCE.items() if v["outcome"]]
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, entry in sorted(rows):
        name = nodeid.split("::")[-1].removeprefix("test_")
        detail = "; ".join(entry["notes"])
        terminalreporter.write_line(f"{entry['outcome']}  {name}" + (f"  ({detail})" if detail else ""))
