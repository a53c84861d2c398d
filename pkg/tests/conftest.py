import pytest

_LINES = []


@pytest.fixture(scope="session")
def criterion_log():
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    return _LINES


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
