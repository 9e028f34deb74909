import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replay the acceptance criterion lines after the run, if any were made."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "ANNOUNCED", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
