import pytest

# criterion number -> (passed, detail); filled by test_acceptance.py
CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        status = "PASS" if passed is True else ("SKIP" if passed is None else "FAIL")
        CRITERIA[number] = (status, detail)
        print(f"criterion {number}: {status}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        status, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {status}: {detail}")
