from __future__ import annotations

import pytest

_LINES: dict[str, str] = {}


@pytest.fixture
def criterion(request):
    """record(ok, detail) prints one PASS/FAIL line for an acceptance criterion and asserts it."""
    title = request.node.function.__doc__.strip().splitlines()[0]

    def record(ok: bool, detail: str) -> None:
        line = f"{title}: {'PASS' if ok else 'FAIL'} ({detail})"
        _LINES[request.node.nodeid] = line
        print(line)
        assert ok, line

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and "criterion" in getattr(item, "fixturenames", ()) and item.nodeid not in _LINES:
        title = item.function.__doc__.strip().splitlines()[0]
        _LINES[item.nodeid] = f"{title}: {'PASS' if rep.passed else 'FAIL'} (no result recorded)"


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES.values(), key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
