import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iiclab.fitting import InsufficientDataError, ScalingFit, fit_loglog, fit_loglog_grouped, with_exponent

X8 = 2.0 ** np.arange(1, 9)


def test_exact_power_law():
    f = fit_loglog(X8, 3 * X8**2, bootstrap=100)
    assert f.slope == pytest.approx(2.0, abs=1e-10)
    assert f.intercept == pytest.approx(np.log(3), abs=1e-10)


def test_constant():
    f = fit_loglog(X8, np.full(8, 5.0), bootstrap=50)
    assert f.slope == pytest.approx(0.0, abs=1e-12)


def test_synthetic_093_benchmark():
    inside = 0
    covered = 0
    for r in range(100):
        rng = np.random.default_rng(r)
        y = X8**0.93 * (1 + 0.02 * rng.normal(size=8))
        f = fit_loglog(X8, y, bootstrap=400, seed=r)
        inside += 0.88 <= f.slope <= 0.98
        covered += f.ci[0] <= 0.93 <= f.ci[1]
    assert inside >= 95
    assert covered >= 80  # 8-point bootstrap intervals are a little narrow


def test_bad_inputs():
    with pytest.raises(InsufficientDataError):
        fit_loglog([1, 2, 3], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_loglog(X8, np.r_[0.0, X8[1:]])
    with pytest.raises(ValueError):
        fit_loglog(np.r_[-1.0, X8[1:]], X8)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_slope_and_ci_contain_truth_without_noise(b, c):
    f = fit_loglog(X8, c * X8**b, bootstrap=30)
    assert f.slope == pytest.approx(b, abs=1e-9)
    assert f.ci[0] <= f.slope <= f.ci[1]


def test_grouped_matches_pooled_means():
    rng = np.random.default_rng(0)
    counts = rng.integers(1, 4, size=(10, 5)).astype(float)
    sums = counts * (X8[:5] ** 1.5) * rng.uniform(0.9, 1.1, size=(10, 5))
    f = fit_loglog_grouped(X8[:5], sums, counts, bootstrap=200)
    direct = fit_loglog(X8[:5], sums.sum(0) / counts.sum(0), bootstrap=0)
    assert f.slope == pytest.approx(direct.slope, abs=1e-12)
    assert len(f.extra["boot_slopes"]) == 200
    assert f.ci[0] <= f.slope <= f.ci[1]


def test_exponent_transform_and_roundtrip():
    f = with_exponent(fit_loglog(X8, X8**0.8, bootstrap=20), lambda s: 2 / s, "beta_star")
    assert f.exponent == pytest.approx(2.5)
    assert f.exponent_ci[0] <= f.exponent <= f.exponent_ci[1]
    g = ScalingFit.from_dict(f.to_dict())
    assert g.slope == f.slope and g.kind == "beta_star"
