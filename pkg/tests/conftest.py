import pytest

# acceptance outcomes, filled by tests/test_acceptance.py and printed at the end of the run
CRITERIA = {}


def record(number: int, title: str, passed: bool, detail: str) -> None:
    CRITERIA[number] = (title, passed, detail)


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        title, passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
