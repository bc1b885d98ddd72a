import _criteria


def pytest_terminal_summary(terminalreporter):
    if not _criteria.LINES and not _criteria.EXPECTED:
        return
    terminalreporter.write_sep("-", "acceptance summary")
    for line in _criteria.LINES:
        terminalreporter.write_line(line)
    for num in sorted(_criteria.EXPECTED - _criteria.SEEN):
        terminalreporter.write_line(
            f"criterion {num:02d} NO-RESULT (test errored before recording)")
