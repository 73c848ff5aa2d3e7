import pytest

from helpers import close_all, tcp_world
from tmpc import spawn_inproc_world


@pytest.fixture(params=["inproc", "tcp"])
def make_world(request):
    """Factory ``make_world(n)`` for the parametrized backend."""
    made = []

    def factory(n):
        eps = spawn_inproc_world(n) if request.param == "inproc" else tcp_world(n)
        made.append(eps)
        return eps

    factory.backend = request.param
    yield factory
    for eps in made:
        close_all(eps)


# -- acceptance reporting -----------------------------------------------------

_acceptance_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    key = (marker.args[0], marker.args[1])
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _acceptance_results.get(key, True)
        _acceptance_results[key] = prev and report.outcome == "passed"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), ok in sorted(_acceptance_results.items()):
        terminalreporter.write_line(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}")
