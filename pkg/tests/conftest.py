import logging

import pytest

from factflaw.demo import make_demo_corpus

_ACCEPTANCE_RESULTS: dict[str, str] = {}


@pytest.fixture(scope="session")
def demo_corpus(tmp_path_factory):
    """Synthetic dataset + article store shared across the session."""
    root = tmp_path_factory.mktemp("demo_corpus")
    dataset, articles = make_demo_corpus(root, n=24, seed=13)
    return dataset, articles


@pytest.fixture(autouse=True)
def _quiet_warnings(caplog):
    caplog.set_level(logging.WARNING)
    return caplog


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _ACCEPTANCE_RESULTS[name] = report.outcome.upper()
    elif report.when == "setup" and report.skipped:
        _ACCEPTANCE_RESULTS[name] = "SKIPPED"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        outcome = _ACCEPTANCE_RESULTS[name]
        label = {"PASSED": "PASS", "FAILED": "FAIL", "SKIPPED": "SKIP"}.get(outcome, outcome)
        terminalreporter.write_line(f"{label}  {name}")
