import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_standalone_prune import REAL_RUN_STATUS
    except ImportError:
        return
    if REAL_RUN_STATUS:
        terminalreporter.write_sep("-", "real-network criterion")
        terminalreporter.write_line(f"criterion 9: {REAL_RUN_STATUS[0]}")
