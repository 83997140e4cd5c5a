import pytest

# criterion number -> (status, summary), filled by the acceptance tests
CRITERIA = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, summary: str, expected_failure: bool = False):
        status = "PASS" if passed else ("FAIL (expected, see ledger)" if expected_failure else "FAIL")
        CRITERIA[number] = (status, summary)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        status, summary = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status:5}  {summary}")
