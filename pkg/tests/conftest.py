import pytest

# (criterion id, title, passed, detail) in execution order
ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome, then assert it."""

    def report(cid, title, passed, detail):
        ACCEPTANCE_LINES.append((cid, title, bool(passed), detail))
        assert passed, f"criterion {cid} ({title}) failed: {detail}"

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid, title, passed, detail in ACCEPTANCE_LINES:
        tr.write_line(f"{'PASS' if passed else 'FAIL'}  {cid:<6} {title}: {detail}")
