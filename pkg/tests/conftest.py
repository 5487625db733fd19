import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# acceptance criteria in reporting order
CRITERIA = (
    "roughness-oracle",
    "smoother-oracle",
    "geweke-suite",
    "tau-conditional-oracle",
    "ground-truth-recovery",
    "error-bound-coverage",
    "contribution-identity",
    "alpha-nesting",
    "determinism",
    "supplement-error-bounds",
    "performance-chain",
    "performance-map",
)

_results = {}


@pytest.fixture
def report():
    """Record the outcome of one acceptance criterion for the final summary."""

    def _report(name, ok, detail, status=None):
        if name not in CRITERIA:
            raise KeyError(name)
        _results[name] = (status or ("PASS" if ok else "FAIL"), detail)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name in CRITERIA:
        status, detail = _results.get(name, ("NOT RUN", ""))
        tr.write_line(f"{status:7s} {name}: {detail}")
