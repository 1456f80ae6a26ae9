import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion, when that module ran."""
    try:
        from test_acceptance import CRITERIA, RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for criterion in sorted(CRITERIA):
        status = RESULTS.get(criterion)
        if status is None:
            continue
        terminalreporter.write_line(
            f"criterion {criterion}: {status} - {CRITERIA[criterion]}"
        )
