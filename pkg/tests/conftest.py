from __future__ import annotations

import sys

import numpy as np
import pytest

from szegolab.models import SzegoEvaluator, projective_line, projective_line_perturbed, torus


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs longer than a few seconds")
    config.addinivalue_line("markers", "acceptance: acceptance criterion")


@pytest.fixture(scope="session")
def p1():
    return projective_line()


@pytest.fixture(scope="session")
def p1_pert():
    return projective_line_perturbed()


@pytest.fixture(scope="session")
def flat_torus():
    return torus()


@pytest.fixture(scope="session")
def evaluators():
    """Shared evaluator memo keyed by (model id, N)."""
    memo = {}

    def get(g, N):
        key = (g.model_id, int(N))
        if key not in memo:
            memo[key] = SzegoEvaluator(g, N)
        return memo[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
