SCORECARD = []


def pytest_terminal_summary(terminalreporter):
    if SCORECARD:
        terminalreporter.section("acceptance scorecard")
        for line in SCORECARD:
            terminalreporter.line(line)
