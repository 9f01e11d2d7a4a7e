import numpy as np
import pytest

_criteria: dict[int, dict] = {}
_notes: dict[int, list[str]] = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    entry = _criteria.setdefault(n, {"title": title, "ok": True, "seen": False})
    if call.when == "call" or call.excinfo is not None:
        entry["seen"] = True
        if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
            entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        entry = _criteria[n]
        status = "PASS" if entry["ok"] and entry["seen"] else "FAIL"
        line = f"criterion {n:2d} {status}  {entry['title']}"
        if _notes.get(n):
            line += "  | " + "; ".join(_notes[n])
        terminalreporter.write_line(line)


@pytest.fixture
def criterion_note(request):
    """Attach a measured value to this test's criterion line in the summary."""
    n = request.node.get_closest_marker("criterion").args[0]

    def note(text: str) -> None:
        _notes.setdefault(n, []).append(text)
        print(f"criterion {n}: {text}")

    return note


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
