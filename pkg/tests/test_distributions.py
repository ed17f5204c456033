from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edf_fluid.distributions import (
    Deterministic,
    EmpiricalGrid,
    Exponential,
    HyperExponential,
    Uniform,
    Weibull,
    distribution_from_dict,
    tail_integral,
    y_star,
)
from edf_fluid.errors import ConfigError
from edf_fluid.measures import FiniteMeasure, kolmogorov_distance

LAWS = [
    Exponential(2.0),
    Uniform(0.0, 1.5),
    Uniform(0.5, 2.0),
    Weibull(1.7, 0.8),
    Weibull(0.6, 1.2),
    HyperExponential((0.3, 0.7), (0.5, 4.0)),
    EmpiricalGrid((0.0, 0.5, 2.0, 3.0), (0.0, 0.4, 0.9, 1.0)),
]
CONTINUOUS_LAWS = [d for d in LAWS if d.is_continuous]


def test_exponential_cdf_matches_closed_form():
    d = Exponential(1.0)
    assert d.cdf(0.0) == 0.0
    x = np.linspace(0.0, 5.0, 11)
    np.testing.assert_allclose(Exponential(3.0).cdf(x), 1.0 - np.exp(-3.0 * x))


def test_empirical_grid_exact_at_knots():
    d = EmpiricalGrid((0.0, 0.5, 2.0), (0.0, 0.25, 1.0))
    for p, c in zip(d.points, d.cdf_values):
        assert d.cdf(p) == c


def test_empirical_grid_atom_is_right_continuous():
    d = EmpiricalGrid((0.0, 1.0, 1.0, 2.0), (0.0, 0.2, 0.6, 1.0))
    assert not d.is_continuous
    assert d.cdf(1.0) == 0.6
    assert d.cdf(1.0 - 1e-12) == pytest.approx(0.2)


def test_tail_integral_examples():
    t = 1.3
    assert tail_integral(Exponential(2.0), 0.0, t) == pytest.approx((1 - math.exp(-2 * t)) / 2)
    assert tail_integral(Uniform(0.0, 1.0), 0.0, 1.0) == pytest.approx(0.5)
    for d in LAWS:
        assert tail_integral(d, 0.7, 0.7) == 0.0


@pytest.mark.parametrize("d", [d for d in LAWS if d.tail_antiderivative(0.0) is not None])
def test_closed_form_tail_integral_matches_quadrature(d):
    a = np.array([0.0, 0.2, 1.0, 2.5])
    b = a + np.array([0.5, 1.7, 0.3, 4.0])
    np.testing.assert_allclose(
        tail_integral(d, a, b, method="closed"), tail_integral(d, a, b, method="quad"),
        atol=1e-9,
    )


@settings(max_examples=50, deadline=None)
@given(
    k=st.integers(0, len(LAWS) - 1),
    a=st.floats(0.0, 5.0),
    gap1=st.floats(0.0, 3.0),
    gap2=st.floats(0.0, 3.0),
)
def test_tail_integral_additive(k, a, gap1, gap2):
    d = LAWS[k]
    b, c = a + gap1, a + gap1 + gap2
    lhs = tail_integral(d, a, c)
    assert lhs == pytest.approx(tail_integral(d, a, b) + tail_integral(d, b, c), abs=1e-9)


@pytest.mark.parametrize("d", LAWS + [Deterministic(0.7)])
def test_sampler_matches_cdf(d):
    rng = np.random.default_rng(2024)
    draws = d.sample(rng, 100_000)
    emp = FiniteMeasure.point_masses(draws, 1e-5)
    # compare CDFs through tails of unit-mass measures
    law = FiniteMeasure.analytic(d.tail, 1.0, d.quantile(1 - 1e-12))
    if d.is_continuous:
        assert kolmogorov_distance(emp, law) < 0.01
    else:
        assert np.all(draws == 0.7)


@pytest.mark.parametrize("d", LAWS)
def test_mean_matches_tail_integral(d):
    upper = d.y_max if math.isfinite(d.y_max) else d.quantile(1 - 1e-15) * 4
    assert d.mean() == pytest.approx(tail_integral(d, 0.0, upper, method="quad"), abs=1e-7)


def test_y_star_examples():
    assert y_star(Exponential(1.0), 2.0, 1.0) == pytest.approx(math.log(2.0), abs=1e-12)
    assert y_star(Exponential(1.0), 1.0, 1.0) == math.inf
    assert y_star(Uniform(0.0, 1.0), 2.0, 1.0) == pytest.approx(0.5, abs=1e-12)


def test_y_star_against_scan():
    # sup{y : lam G(y) < mu} by a dense scan
    g = Weibull(1.7, 0.8)
    y = np.linspace(0.0, 5.0, 500_001)
    ok = y[2.5 * g.cdf(y) < 1.0]
    assert y_star(g, 2.5, 1.0) == pytest.approx(ok.max(), abs=2e-5)


@settings(max_examples=40, deadline=None)
@given(mu1=st.floats(0.1, 1.9), mu2=st.floats(0.1, 1.9), k=st.integers(0, len(LAWS) - 1))
def test_y_star_monotone_in_mu(mu1, mu2, k):
    lo, hi = sorted((mu1, mu2))
    assert y_star(LAWS[k], 2.0, lo) <= y_star(LAWS[k], 2.0, hi)


def test_continuity_and_monotonicity_flags():
    assert Exponential(1.0).strictly_increasing
    assert not Uniform(0.5, 1.0).strictly_increasing
    assert not Deterministic(1.0).is_continuous
    assert not Deterministic(1.0).strictly_increasing


@pytest.mark.parametrize("d", LAWS + [Deterministic(0.7)])
def test_dict_round_trip(d):
    assert distribution_from_dict(d.to_dict()) == d


@pytest.mark.parametrize(
    "data",
    [
        {"rate": 1.0},
        {"kind": "gamma", "shape": 2.0},
        {"kind": "exponential"},
        {"kind": "exponential", "rate": 1.0, "scale": 2.0},
        {"kind": "empirical_grid", "points": [0.0, 1.0], "cdf": [0.0, 0.5]},
    ],
)
def test_bad_distribution_dicts(data):
    with pytest.raises(ConfigError):
        distribution_from_dict(data)
