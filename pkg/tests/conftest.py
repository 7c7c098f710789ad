import os
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]


def cora_dir() -> Path:
    return Path(os.environ.get("SGCN_CORA_DIR", REPO / "data" / "cora"))


@pytest.fixture(scope="session")
def cora_files():
    """Paths of cora.content / cora.cites.

    The Cora checks are real requirements, so a missing dataset is a failure,
    not a skip.  Point SGCN_CORA_DIR at the directory holding the two files.
    """
    d = cora_dir()
    content, cites = d / "cora.content", d / "cora.cites"
    if not (content.is_file() and cites.is_file()):
        pytest.fail(f"Cora dataset not found: expected {content} and {cites} (set SGCN_CORA_DIR)")
    return content, cites


# one PASS/FAIL line per acceptance criterion, printed at the end of the run

_criteria: dict[str, tuple[str, bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label, text = marker.args
    ok = _criteria.get(label, (text, True))[1]
    if report.failed or (report.when == "call" and not report.passed):
        ok = False
    _criteria[label] = (text, ok)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, (text, ok) in sorted(_criteria.items(), key=lambda kv: [int(p) if p.isdigit() else p
                                                                       for p in kv[0].split(".")]):
        terminalreporter.write_line(f"criterion {label}: {'PASS' if ok else 'FAIL'} - {text}")
