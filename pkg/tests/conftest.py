import pytest

_CRITERIA = {}


@pytest.fixture
def criterion():
    """record(cid, title, passed, detail) stores one acceptance verdict for the summary."""
    def record(cid, title, passed, detail=""):
        _CRITERIA[cid] = (title, bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[cid]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid:>2} {title}: {detail}")
