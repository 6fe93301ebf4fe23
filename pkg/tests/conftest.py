from __future__ import annotations

from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"

CRITERIA = {
    1: "S pipeline equals writer-replay oracle",
    2: "simulator output bit-identical to reference",
    3: "RAW safety and sabotage detection",
    4: "partitioning invariants",
    5: "mapping soundness and diagnostics",
    6: "pipelining evidence",
    7: "relation-algebra properties",
    8: "determinism",
}

_results: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _results.setdefault(marker.args[0], []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        got = _results.get(n)
        if got is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(got) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status} - {name}")


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
