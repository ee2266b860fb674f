import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_criteria: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if marker:
        outcome = "PASS" if report.passed else "FAIL"
        n, title = marker
        prev = _criteria.get(n)
        if prev is None or prev[0] == "PASS":
            _criteria[n] = (outcome, title)


@pytest.fixture(autouse=True)
def _tag_criterion(request, record_property):
    m = request.node.get_closest_marker("criterion")
    if m is not None:
        record_property("criterion", (m.args[0], m.kwargs.get("title", "")))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        outcome, title = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}  {outcome}  {title}")
