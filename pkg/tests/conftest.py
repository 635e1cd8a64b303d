import helpers


def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL line per release-gate check after the run."""
    if helpers.GATE_RESULTS:
        terminalreporter.section("release gate")
        for line in sorted(helpers.GATE_RESULTS):
            terminalreporter.write_line(line)
