"""Collects acceptance-criterion outcomes and prints one line per criterion."""
import pytest

_criteria: dict[str, tuple[bool, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label, title): an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    label, title = marker.args
    passed = rep.passed and rep.when == "call"
    detail = dict(item.user_properties).get("detail", "")
    previous = _criteria.get(label)
    if previous is None or previous[0]:
        _criteria[label] = (passed and (previous is None or previous[0]), title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label in sorted(_criteria, key=lambda s: int(s[2:])):
        passed, title, detail = _criteria[label]
        line = f"{label} {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
