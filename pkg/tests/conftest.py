import math

import numpy as np
import pytest

from gap_thermal.models import build_circle_model, thermalize
from gap_thermal.rng import RandomSeed
from gap_thermal.sampler import sample_g, sample_ga

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert."""

    def record(number, title, ok, detail=""):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number}: {title} {detail}".rstrip())
        print(ACCEPTANCE_LINES[-1])
        assert ok, f"criterion {number} failed: {detail}"

    return record


@pytest.fixture(scope="session")
def circle2():
    return thermalize(build_circle_model(), 2.0)


def size_bias_check(spectrum, M, seed):
    """Compare E_GA ||psi||^2 from the mixture sampler with G samples reweighted by ||psi||^2.

    Returns (mixture_mean, mixture_se, reweighted, reweighted_se, closed_form).
    """
    ga = sample_ga(spectrum, RandomSeed(seed, 1), size=M).norm_sq()
    g = sample_g(spectrum, RandomSeed(seed, 2), size=M).norm_sq()
    # ratio estimator E[w x]/E[w] with w = x = ||psi||^2, delta-method stderr
    num, den = np.mean(g**2), np.mean(g)
    rw = num / den
    cov = np.cov(np.vstack([g**2, g]))
    grad = np.array([1 / den, -num / den**2])
    rw_se = math.sqrt(grad @ cov @ grad / M)
    return (float(ga.mean()), float(ga.std(ddof=1) / math.sqrt(M)), float(rw), rw_se,
            1.0 + float(np.sum(spectrum.weights**2)))


@pytest.fixture(scope="session")
def mixture_gate(circle2):
    """Every GA/GAP-dependent test requests this: the mixture sampler must match the reweighting oracle first."""
    ga, ga_se, rw, rw_se, exact = size_bias_check(circle2, 100_000, 2024)
    if abs(ga - rw) > 5 * math.hypot(ga_se, rw_se):
        pytest.fail(f"GA mixture sampler disagrees with reweighted G oracle: {ga} vs {rw}")
    return ga, ga_se, rw, rw_se, exact
