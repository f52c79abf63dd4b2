import pytest

_ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption(
        "--full-scale",
        action="store_true",
        default=False,
        help="rerun the trajectory acceptance criteria at N = 40 (hours)",
    )


@pytest.fixture(scope="session")
def full_scale(request):
    return request.config.getoption("--full-scale")


@pytest.fixture(scope="session")
def report():
    """Record one acceptance line; all lines are repeated in the terminal summary."""

    def emit(label, passed, detail):
        status = "INFO" if passed is None else ("PASS" if passed else "FAIL")
        line = f"[{status}] {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
