# acceptance lines are collected here and echoed after the run, so they show
# up in plain `pytest -v` output without -s
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split(":", 1)[0]):
        terminalreporter.write_line(line)
