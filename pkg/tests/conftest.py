import itertools
import math

import numpy as np
import pytest


def brute_probability(y0, y, x, beta, gamma, alpha):
    """Path probability from the recursion, one period at a time."""
    lags = list(y0)
    prob = 1.0
    for t, yt in enumerate(y):
        index = float(np.dot(x[t], beta)) + alpha + sum(g * lags[-1 - l] for l, g in enumerate(gamma))
        p1 = 1.0 / (1.0 + math.exp(-index))
        prob *= p1 if yt == 1 else 1.0 - p1
        lags.append(yt)
    return prob


def brute_expectation(moment, y0, T, x, beta, gamma, alpha):
    return sum(
        brute_probability(y0, y, x, beta, gamma, alpha) * float(moment(np.array(y)))
        for y in itertools.product((0, 1), repeat=T)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("ab")), k)):
        passed, detail = ACCEPTANCE[key]
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        terminalreporter.write_line(f"CRITERION {key}: {status} {detail}")
