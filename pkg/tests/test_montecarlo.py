import math

import numpy as np
import pytest

from mkf.distributions import Exponential, Gaussian, Uniform
from mkf.expand import RandomVectorSpec, expectation
from mkf.montecarlo import McEstimate, mc_expectation, sample_correlated_gaussian


def test_cos_of_standard_normal():
    rv = RandomVectorSpec.gaussian(["th"], [0.0], [[1.0]])
    est = mc_expectation("cos(th)", rv, n=10**7, seed=1)
    assert est.within(math.exp(-0.5))
    assert 0 < est.std_error <= 3e-4


def test_correlated_pair_product(rv_pair):
    est = mc_expectation("x*th", rv_pair, n=10**7, seed=2)
    assert est.within(10 * math.pi / 3 + 1.5)


def test_constant_is_exact():
    rv = RandomVectorSpec(independent=[("x", Exponential(1.0))])
    est = mc_expectation("1", rv, n=5000, seed=0)
    assert est.value == 1.0
    assert est.std_error == 0.0


def test_reproducible_and_worker_independent():
    rv = RandomVectorSpec.gaussian(["x", "y"], [1.0, 2.0], [[1.0, 0.3], [0.3, 2.0]], [("u", Uniform(-1, 1))])
    a = mc_expectation("x*y*cos(u)", rv, n=100_000, seed=5, chunk=8192)
    b = mc_expectation("x*y*cos(u)", rv, n=100_000, seed=5, chunk=8192, workers=3)
    assert a == b
    c = mc_expectation("x*y*cos(u)", rv, n=100_000, seed=6, chunk=8192)
    assert c != a


def test_disjoint_seeds_agree():
    rv = RandomVectorSpec.gaussian(["x", "th"], [0.5, 0.2], [[1.0, 0.4], [0.4, 0.8]])
    a = mc_expectation("x^2*sin(th)", rv, n=10**6, seed=10)
    b = mc_expectation("x^2*sin(th)", rv, n=10**6, seed=11)
    assert abs(a.value - b.value) <= 5 * math.hypot(a.std_error, b.std_error)


def test_rejects_small_n():
    with pytest.raises(ValueError):
        mc_expectation("x", RandomVectorSpec.gaussian(["x"], [0.0], [[1.0]]), n=10)


def test_estimate_validation():
    with pytest.raises(ValueError):
        McEstimate(1.0, -1.0, 10)
    with pytest.raises(ValueError):
        McEstimate(1.0, 0.0, 1)


class TestCorrelatedSampling:
    def test_zero_covariance(self):
        s = sample_correlated_gaussian([1.0, -2.0], np.zeros((2, 2)), 100, seed=0)
        np.testing.assert_array_equal(s, np.tile([1.0, -2.0], (100, 1)))

    def test_identity_covariance(self):
        n = 10**6
        s = sample_correlated_gaussian(np.zeros(3), np.eye(3), n, seed=1)
        cov = np.cov(s.T)
        # standard error of a sample variance is about sqrt(2/n), of a covariance 1/sqrt(n)
        assert np.abs(np.diag(cov) - 1).max() <= 5 * math.sqrt(2 / n)
        assert np.abs(cov - np.diag(np.diag(cov))).max() <= 5 / math.sqrt(n)
        assert np.abs(s.mean(axis=0)).max() <= 5 / math.sqrt(n)

    def test_seed_reproducible(self):
        cov = [[2.0, 0.5], [0.5, 1.0]]
        np.testing.assert_array_equal(
            sample_correlated_gaussian([0, 0], cov, 1000, seed=3),
            sample_correlated_gaussian([0, 0], cov, 1000, seed=3),
        )


@pytest.mark.parametrize(
    "rv, text",
    [
        (RandomVectorSpec(independent=[("t", Gaussian(math.pi / 3, math.pi / 6))]), "cos(t)"),
        (RandomVectorSpec(independent=[("t", Uniform(-math.pi / 3, math.pi / 6))]), "cos(t)*sin(t)"),
        (RandomVectorSpec(independent=[("t", Exponential(1.0))]), "t"),
        (RandomVectorSpec(independent=[("x", Exponential(1.0)), ("t", Uniform(-math.pi / 3, math.pi / 6))]), "x*cos(t)"),
    ],
)
def test_golden_moments_within_five_sigma(rv, text):
    est = mc_expectation(text, rv, n=10**6, seed=42)
    assert est.within(expectation(text, rv))
