import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # acceptance verdicts are recorded during the run; echo them after the
    # progress output so they survive output capture and land in any tee
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "VERDICTS", None) if mod is not None else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
