import sys
import warnings

import pytest


@pytest.fixture(autouse=True)
def _quiet_numba():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", category=DeprecationWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, in criterion order."""
    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        ok, detail = lines[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
