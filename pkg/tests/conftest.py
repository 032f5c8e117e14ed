import re

_ACCEPTANCE: dict[int, str] = {}


def pytest_runtest_logreport(report):
    match = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not match or report.when != "call":
        return
    number = int(match.group(1))
    outcome = "PASS" if report.passed else "FAIL"
    # keep the worst outcome if a criterion has several parts
    if _ACCEPTANCE.get(number) != "FAIL":
        _ACCEPTANCE[number] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number}: {_ACCEPTANCE[number]}")
