import pytest

ACCEPTANCE_LINES = {}


@pytest.fixture
def record_criterion():
    """Store the one-line verdict for an acceptance criterion."""
    def record(key, passed, detail, runtime=None, limit=None):
        timing = ""
        if runtime is not None:
            timing = f" [{runtime:.1f} s" + (f" / limit {limit:.0f} s]" if limit else "]")
        ACCEPTANCE_LINES[key] = f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}{timing}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split()[0]), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
