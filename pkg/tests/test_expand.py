import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cases import random_case, random_psd
from mkf.distributions import Exponential, Gaussian, Uniform
from mkf.expand import (
    MomentEngine,
    RandomVectorSpec,
    UnknownVariableError,
    cross_moment_matrix,
    expectation,
    expectation_vector,
    mean_substitution,
    second_moment_matrix,
    whiten,
)
from mkf.expr import TermLimitError, evaluate, parse
from mkf.linalg import NotPSDError
from mkf.montecarlo import mc_expectation

EXP_UNIFORM = RandomVectorSpec(independent=[("x", Exponential(1.0)), ("th", Uniform(-math.pi / 3, math.pi / 6))])


class TestGolden:
    def test_correlated_pair(self, rv_pair):
        assert expectation("x*th", rv_pair) == pytest.approx(10 * math.pi / 3 + 1.5, rel=1e-13)
        assert round(expectation("x*th", rv_pair), 2) == 11.97
        assert expectation("x*cos(th)", rv_pair) == pytest.approx(2.848, abs=1e-3)
        assert expectation("x*cos(th)*sin(th)", rv_pair) == pytest.approx(1.256, abs=5e-4)

    def test_correlated_pair_without_correlation(self, rv_pair):
        flat = rv_pair.decorrelated()
        assert expectation("x*th", flat) == pytest.approx(10 * math.pi / 3, rel=1e-13)
        assert expectation("x*cos(th)", flat) == pytest.approx(3.848, abs=5e-4)
        assert expectation("x*cos(th)*sin(th)", flat) == pytest.approx(1.520, abs=5e-4)

    def test_correlated_triple(self, rv_triple):
        assert expectation("x*y*sin(th)", rv_triple) == pytest.approx(39.62, abs=5e-3)
        assert expectation("x^2*y*cos(th)", rv_triple) == pytest.approx(162.3, abs=5e-2)

    def test_exponential_uniform(self):
        assert expectation("x*th", EXP_UNIFORM) == pytest.approx(-math.pi / 12, rel=1e-13)
        assert expectation("x*cos(th)", EXP_UNIFORM) == pytest.approx(0.870, abs=5e-4)
        assert expectation("x*cos(th)*sin(th)", EXP_UNIFORM) == pytest.approx(-1 / (2 * math.pi), rel=1e-12)

    def test_linear_substitution_differs(self, rv_pair):
        assert mean_substitution("x*th", rv_pair) == pytest.approx(10 * math.pi / 3)


class TestVectorAndMatrix:
    def test_means(self, rv_pair):
        np.testing.assert_allclose(expectation_vector(["x", "th"], rv_pair), [10.0, math.pi / 3], rtol=1e-14)

    def test_point_mass(self):
        rv = RandomVectorSpec.gaussian(["x", "th"], [1.5, 0.4], np.zeros((2, 2)), [("w", Gaussian(0.2, 0.0))])
        es = ["x*cos(th) + w", "x^3*sin(2*th - 1)", "w*x*th"]
        env = {"x": 1.5, "th": 0.4, "w": 0.2}
        np.testing.assert_allclose(expectation_vector(es, rv), [evaluate(parse(e), env) for e in es], rtol=1e-12)

    def test_batched_matches_single(self, rv_triple):
        es = ["x*cos(th)", "y^2*sin(th)", "x*y"]
        batched = expectation_vector(es, rv_triple)
        single = [expectation(e, rv_triple) for e in es]
        np.testing.assert_allclose(batched, single, rtol=1e-12)

    def test_second_moment_scalar(self):
        rv = RandomVectorSpec.gaussian(["x"], [0.0], [[1.0]])
        np.testing.assert_allclose(second_moment_matrix(["x"], rv), [[1.0]], rtol=1e-14)

    def test_trig_trace(self):
        rv = RandomVectorSpec.gaussian(["th"], [0.3], [[0.7]])
        M = second_moment_matrix(["cos(th)", "sin(th)"], rv)
        assert np.trace(M) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_array_equal(M, M.T)

    def test_second_moments_dominate_squared_means(self, rv_triple):
        es = ["x*cos(th)", "y*sin(th)", "x*y"]
        M = second_moment_matrix(es, rv_triple)
        m = expectation_vector(es, rv_triple)
        assert np.all(np.diag(M) >= m**2 - 1e-9)

    def test_cross_moments(self, rv_pair):
        C = cross_moment_matrix(["x", "th"], ["cos(th)"], rv_pair)
        assert C[0, 0] == pytest.approx(expectation("x*cos(th)", rv_pair), rel=1e-12)

    @pytest.mark.slow
    def test_second_moments_against_monte_carlo(self):
        rng = np.random.default_rng(5)
        rv = RandomVectorSpec.gaussian(["x", "th"], [0.5, -0.3], random_psd(rng, 2))
        es = ["x*cos(th)", "sin(th) + x"]
        M = second_moment_matrix(es, rv)
        for i in range(2):
            for j in range(2):
                est = mc_expectation(f"({es[i]}) * ({es[j]})", rv, n=10**7, seed=10 * i + j)
                assert est.within(M[i, j])


class TestProperties:
    @given(
        st.lists(st.floats(0.01, 3.0), min_size=3, max_size=3),
        st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3),
        st.sampled_from(["x*y*sin(th)", "x^2*cos(2*th - y)", "sin(x + y)^2*th", "cos(x)*cos(y)*cos(th)^2"]),
    )
    @settings(max_examples=60, deadline=None)
    def test_diagonal_covariance_reduction(self, var, mean, text):
        rv = RandomVectorSpec.gaussian(["x", "y", "th"], mean, np.diag(var))
        corr = expectation(text, rv)
        indep = expectation(text, rv.decorrelated())
        assert corr == pytest.approx(indep, rel=1e-10, abs=1e-12)

    def test_affine_expectation(self, rv_triple):
        value = expectation("2*x - 3*y + 0.5*th + 4", rv_triple)
        assert value == pytest.approx(2 * 10 - 3 * 5 + 0.5 * math.pi / 3 + 4, rel=1e-14)

    def test_permutation_invariance(self, rv_triple):
        order = [2, 0, 1]
        names = [rv_triple.gaussian_names[i] for i in order]
        perm = RandomVectorSpec.gaussian(names, rv_triple.mean[order], rv_triple.cov[np.ix_(order, order)])
        for text in ["x*y*sin(th)", "x^2*y*cos(th)", "cos(x - th)*y^2"]:
            assert expectation(text, perm) == pytest.approx(expectation(text, rv_triple), rel=1e-10)

    def test_whitening_pushback(self, rv_triple):
        w = whiten(rv_triple)
        assert np.all(w.variances >= 0)
        np.testing.assert_allclose(w.pushback(), rv_triple.cov, atol=1e-10)
        np.testing.assert_allclose(w.T @ w.means, rv_triple.mean, atol=1e-12)

    def test_mixed_blocks_factorize(self, rv_pair):
        rv = rv_pair.with_independent([("v", Exponential(2.0))])
        assert expectation("x*cos(th)*v^2", rv) == pytest.approx(expectation("x*cos(th)", rv_pair) * 0.5, rel=1e-12)

    def test_concurrent_engine_use(self, rv_triple):
        engine = MomentEngine(rv_triple)
        texts = ["x*y*sin(th)", "x^2*y*cos(th)", "cos(x - th)*y^2", "y^3*sin(2*th)"] * 4
        expected = [MomentEngine(rv_triple).expectation(t) for t in texts]
        results = [None] * len(texts)

        def work(i):
            results[i] = engine.expectation(texts[i])

        threads = [threading.Thread(target=work, args=(i,)) for i in range(len(texts))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == expected


class TestErrors:
    def test_unknown_variable(self, rv_pair):
        with pytest.raises(UnknownVariableError):
            expectation("x*q", rv_pair)

    def test_term_limit(self, rv_triple):
        with pytest.raises(TermLimitError):
            expectation("(x + y + th)^8 * cos(x + y + th)^6", rv_triple, limit=1000)

    def test_invalid_spec(self):
        with pytest.raises(ValueError, match="duplicate"):
            RandomVectorSpec.gaussian(["x"], [0.0], [[1.0]], [("x", Exponential(1.0))])
        with pytest.raises(NotPSDError):
            RandomVectorSpec.gaussian(["x", "y"], [0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ValueError, match="symmetric"):
            RandomVectorSpec.gaussian(["x", "y"], [0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])


@pytest.mark.slow
def test_random_cases_against_monte_carlo():
    rng = np.random.default_rng(2024)
    misses = 0
    for k in range(40):
        rv, text = random_case(rng)
        est = mc_expectation(text, rv, n=10**6, seed=k)
        misses += not est.within(expectation(text, rv))
    assert misses <= 1
