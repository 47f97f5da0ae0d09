import pytest

from icesim import _backend

_REPORT = pytest.StashKey[list]()


@pytest.fixture(params=_backend.available())
def backend(request):
    """Run the test once per available kernel backend."""
    previous = _backend.use(request.param)
    yield request.param
    _backend.use(previous)


def pytest_configure(config):
    config.stash[_REPORT] = []


@pytest.fixture(scope="session")
def acceptance_report(pytestconfig):
    """Collects ``(criterion, title, verdict, detail)`` lines for the terminal summary."""
    return pytestconfig.stash[_REPORT]


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, verdict, detail in sorted(lines, key=lambda r: (int(str(r[0]).rstrip("abcdefgh")), str(r[0]))):
        terminalreporter.write_line(f"criterion {number:<3} {verdict:<4}  {title}: {detail}")
