"""Shared test plumbing: the acceptance tests record one verdict per
criterion here, and the terminal summary prints them as stable
"criterion NN <name>: PASS|FAIL" lines."""

CRITERIA_RESULTS = {}


def record_criterion(number, name, verdict):
    CRITERIA_RESULTS[number] = (name, verdict)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERIA_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(CRITERIA_RESULTS):
        name, verdict = CRITERIA_RESULTS[number]
        terminalreporter.write_line(
            "criterion %02d %s: %s" % (number, name, verdict))
