import _report


def pytest_terminal_summary(terminalreporter):
    if _report.LINES:
        terminalreporter.write_sep("-", "exporter acceptance summary")
        for line in _report.LINES:
            terminalreporter.write_line(line)
