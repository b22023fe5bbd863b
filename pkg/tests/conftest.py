import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "seconds": 0.0, "ran": False})
    if report.when == "call":
        entry["ran"] = True
        entry["seconds"] += report.duration
    if report.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = "PASS" if e["ok"] and e["ran"] else ("NOT RUN" if not e["ran"] else "FAIL")
        terminalreporter.write_line(f"criterion {number:>2}: {status:<7} {e['title']} ({e['seconds']:.1f} s)")
