import pytest

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    # a criterion fails if any phase of any of its tests fails
    if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
        _CRITERIA[number] = (title, "FAIL")
    elif call.when == "call":
        _CRITERIA.setdefault(number, (title, "PASS"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")
