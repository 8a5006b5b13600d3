import pytest

_verdicts = {}


@pytest.fixture
def verdict():
    """Record the one-line outcome of an acceptance criterion."""
    def record(number, passed, detail):
        _verdicts[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(_verdicts[number])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_verdicts):
        terminalreporter.write_line(_verdicts[number])
