"""Acceptance criteria at their stated budgets and tolerances.

Each test prints one ``[PASS]``/``[FAIL]`` line.  Criteria 1 and 10 are
not attainable as stated (see notes/decisions.md); they are evaluated
faithfully and marked as strict expected failures, so an unexpected
pass turns the suite red.
"""
import time

import pytest

from iiclab.experiments import (
    arm_statistics,
    criterion_arm_exponents,
    criterion_arm_inequalities,
    criterion_backbone_oracle,
    criterion_covering,
    criterion_diffusive,
    criterion_distance_lowerbound,
    criterion_markov_algebra,
    criterion_subdiffusive,
    criterion_thin_backbone,
    criterion_volume_tail,
)

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(result):
        with capsys.disabled():
            print("\n" + result.line())
        return result

    return emit


@pytest.fixture(scope="module")
def arms():
    """One 10^5-trial run on S(128), shared by criteria 3 and 4."""
    t0 = time.perf_counter()
    stats = arm_statistics(radii=(8, 16, 32, 64, 128), trials=10**5, seed=0)
    return stats, time.perf_counter() - t0


@pytest.mark.xfail(strict=True, reason="square patches cannot be both 2^k-bounded in the L1 metric and 1/4-padded")
def test_criterion_01_covering_exactness(report):
    r = report(criterion_covering(k_max=10, shifts=100, window=256, n_padding=10**4))
    assert r.seconds < 60
    assert r.passed, r.details["failures"]


def test_criterion_02_backbone_oracle(report):
    r = report(criterion_backbone_oracle(n_random=200))
    assert r.seconds < 300
    assert r.passed, r.details["mismatches"]


def test_criterion_03_arm_inequalities(report, arms):
    stats, seconds = arms
    r = report(criterion_arm_inequalities(stats, radii=(8, 16, 32, 64)))
    assert stats.trials == 10**5
    assert seconds + r.seconds < 600
    assert r.passed, r.details["parts"]


def test_criterion_04_arm_exponents_soft(report, arms):
    stats, _ = arms
    r = report(criterion_arm_exponents(stats))
    # soft: the band check is reported, never fatal
    assert r.soft


def test_criterion_05_thin_backbone(report):
    r = report(criterion_thin_backbone(samples=2000, n=256, ks=(3, 4, 5, 6, 7)))
    assert r.details["samples"] >= 1000
    assert r.seconds < 1800
    assert r.passed, r.details["headline"]


def test_criterion_06_markov_algebra(report):
    r = report(criterion_markov_algebra(chains=50, max_states=100))
    assert r.seconds < 60
    assert r.passed


def test_criterion_07_diffusive_baseline(report):
    r = report(criterion_diffusive(walks=1000, n=128))
    assert r.seconds < 600
    assert r.passed, r.details["headline"]


def test_criterion_08_subdiffusivity(report):
    r = report(criterion_subdiffusive(clusters=500, walks=4, n=256))
    assert r.seconds < 7200
    assert r.passed, r.details["headline"]


def test_criterion_09_distance_lower_bound(report):
    r = report(criterion_distance_lowerbound(clusters=100, n=256, sources=10, per_source=12, floor=8))
    assert r.details["pairs"] >= 10**4
    assert r.seconds < 1800
    assert r.passed, r.details["headline"]


@pytest.mark.xfail(strict=True, reason="with pi1(32) near 0.66, lambda q^2 pi1 exceeds the q^2 patch volume for every lambda >= 2")
def test_criterion_10_volume_tail(report):
    r = report(criterion_volume_tail(samples=10**4, q=32, n=64, lambdas=(2, 4, 8), pi1_trials=10**4))
    assert r.seconds < 1200
    assert r.passed, r.details["headline"]
