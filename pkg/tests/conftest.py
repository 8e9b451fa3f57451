import pytest

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for acceptance verdicts; prints one line per criterion."""
    def record(criterion, ok, detail=""):
        line = f"{criterion}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
