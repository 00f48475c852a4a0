import numpy as np
import pytest

from nlsgraph import analytic, graph_core as gc


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running solver or pipeline test")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sampled_soliton(g, p=4.0, mu=1.0, edge=None):
    """phi_mu centred at the vertex of a line, half-line or star surrogate."""
    return gc.GraphFunction.from_callable(g, lambda i, x: analytic.soliton_profile(p, mu, x))


# ---------------------------------------------------------------------- acceptance report

_OUTCOMES = {}
_DETAILS = {}


@pytest.fixture
def note(request):
    """Record a one-line detail for the acceptance summary of the running test."""

    def _note(text):
        _DETAILS[request.node.nodeid] = text

    return _note


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    prev = _OUTCOMES.get(report.nodeid, "passed")
    if report.failed:
        _OUTCOMES[report.nodeid] = "failed"
    elif report.skipped and prev != "failed":
        _OUTCOMES[report.nodeid] = "skipped"
    elif report.when == "call":
        _OUTCOMES.setdefault(report.nodeid, "passed")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_OUTCOMES):
        name = nodeid.split("::")[-1]
        label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[_OUTCOMES[nodeid]]
        detail = _DETAILS.get(nodeid, "")
        terminalreporter.write_line(f"{label} {name}{': ' + detail if detail else ''}")
