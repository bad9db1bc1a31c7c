"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

CRITERIA = {
    1: "risk normalization (10k geometries, mean identity 1e-12, < 5 s)",
    2: "CPA analytic vs brute force (1k pairs, < 60 s)",
    3: "dynamics step responses vs closed form (0.1%, 100 s)",
    4: "give-way snapshot -> crossing, give-way, starboard",
    5: "stand-on snapshot -> crossing, stand-on",
    6: "risk calibration on snapshot triples (+-0.05)",
    7: "bundled scenario properties (< 10 s each)",
    8: "classification sweep and boundaries",
    9: "LLM adapter contract (echo, garbage, contradiction)",
    10: "replay determinism of trajectory.csv",
}

_outcomes: dict[int, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number = marker.args[0]
    if report.when == "call":
        _outcomes.setdefault(number, []).append(report.passed)
    elif report.failed or report.skipped:
        _outcomes.setdefault(number, []).append(False)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in CRITERIA.items():
        results = _outcomes.get(number)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status:7s} {title}")
