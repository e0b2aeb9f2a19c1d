import numpy as np
import pytest
from hypothesis import settings

from iml.fields import build_grid

settings.register_profile("iml", max_examples=25, deadline=None)
settings.load_profile("iml")


@pytest.fixture
def unit9():
    return build_grid(2, (0.0, 1.0), 9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion
_CRITERIA = {}


def _criterion(nodeid):
    name = nodeid.split("::")[-1]
    if "test_acceptance" not in nodeid or not name.startswith("test_criterion_"):
        return None
    return int(name.split("_")[2])


def pytest_runtest_logreport(report):
    k = _criterion(report.nodeid)
    if k is None:
        return
    parts = _CRITERIA.setdefault(k, [])
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if hasattr(report, "wasxfail"):
            state = "XFAIL"
        else:
            state = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = "; ".join(str(v) for key, v in report.user_properties if key == "detail")
        parts.append((state, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        states = [s for s, _ in _CRITERIA[k]]
        if "FAIL" in states:
            verdict = "FAIL"
        elif "XFAIL" in states:
            verdict = "PASS*" if "PASS" in states else "XFAIL"
        else:
            verdict = "PASS" if states and set(states) == {"PASS"} else "SKIP"
        details = " | ".join(f"{s}: {d}" if d else s for s, d in _CRITERIA[k])
        terminalreporter.write_line(f"criterion {k:2d}: {verdict:5s} {details}")
    if any("XFAIL" in [s for s, _ in v] for v in _CRITERIA.values()):
        terminalreporter.write_line("PASS* = attainable parts pass, the rest is a strict xfail")
