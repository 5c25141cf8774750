import numpy as np
import pytest
from scipy import stats

from crlmix.errors import InvalidArgument
from crlmix.randvar import RngStream
from crlmix.simdata import (
    EXAMPLE1_DEFAULTS,
    design_grid,
    example_prior,
    gen_example1,
    gen_example2,
    gen_example3,
    generate,
    sample_mixture_responses,
)
from crlmix.core import theta_to_pi

GRID = design_grid(num=25)


def within_se(y, pi, C, k=3.0):
    n = y.size
    freq = np.bincount(y, minlength=C + 1)[1:] / n
    se = np.sqrt(pi * (1 - pi) / n)
    return np.all(np.abs(freq - pi) <= k * se)


class TestExample1:
    def test_truth_simplex(self):
        s = gen_example1(50, rng=RngStream(0))
        pi = s.truth(GRID)
        assert pi.shape == (25, 3)
        np.testing.assert_allclose(pi.sum(axis=1), 1.0, atol=1e-12)

    def test_weights_sum_to_one(self):
        from crlmix.simdata import _ex1_weights
        w = _ex1_weights(EXAMPLE1_DEFAULTS, np.linspace(-10, 10, 101))
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-15)

    def test_identical_components_reduce(self):
        b = [[[0.3, -0.2]] * 3, [[-0.5, 0.1]] * 3]
        s = gen_example1(10, params={"b": b}, rng=RngStream(0))
        th = np.column_stack([0.3 - 0.2 * GRID[:, 1], -0.5 + 0.1 * GRID[:, 1]])
        np.testing.assert_allclose(s.truth(GRID), theta_to_pi(th), atol=1e-14)

    def test_empirical_at_zero(self):
        s = gen_example1(1_000_000, params={"x_range": [0.0, 0.0]}, rng=RngStream(1))
        assert within_se(s.data.y, s.truth(np.array([[1.0, 0.0]]))[0], 3)

    def test_bad_shapes(self):
        with pytest.raises(InvalidArgument):
            gen_example1(10, params={"a": [[0.0, 1.0]]})


class TestExample2:
    def test_symmetric_cutoffs(self):
        s = gen_example2(10, params={"beta": [0.4, 0.0], "cutoffs": [-0.6, 1.4]}, rng=RngStream(0))
        pi = s.truth(GRID)
        np.testing.assert_allclose(pi[:, 0], pi[:, 2], atol=1e-15)

    def test_truth_simplex(self):
        np.testing.assert_allclose(gen_example2(5, rng=RngStream(0)).truth(GRID).sum(axis=1), 1.0)

    @pytest.mark.parametrize("x", [-6.0, 0.0, 4.5])
    def test_empirical(self, x):
        s = gen_example2(1_000_000, params={"x_range": [x, x]}, rng=RngStream(2, (int(x),)))
        assert within_se(s.data.y, s.truth(np.array([[1.0, x]]))[0], 3)

    def test_unordered(self):
        with pytest.raises(InvalidArgument):
            gen_example2(10, params={"cutoffs": [1.0, -1.0]})

    def test_unknown_param(self):
        with pytest.raises(InvalidArgument):
            gen_example2(10, params={"slope": 1.0})


class TestExample3:
    def test_constant_curves(self):
        s = gen_example3(10, params={"c": [[0.5, 0.0], [-1.0, 0.0]]}, rng=RngStream(0))
        g = np.column_stack([np.ones(6), np.linspace(0, 1, 6), np.linspace(1, 0, 6)])
        pi = s.truth(g)
        np.testing.assert_allclose(pi, np.broadcast_to(theta_to_pi([0.5, -1.0]), (6, 3)), atol=1e-15)

    def test_simplex(self):
        s = gen_example3(10, rng=RngStream(0))
        g = np.column_stack([np.ones(30), np.random.default_rng(0).uniform(size=(30, 2))])
        np.testing.assert_allclose(s.truth(g).sum(axis=1), 1.0, atol=1e-12)

    def test_empirical_marginal(self):
        s = gen_example3(1_000_000, rng=RngStream(3))
        u = np.random.default_rng(9).uniform(size=(2_000_000, 2))
        pi = s.truth(np.column_stack([np.ones(u.shape[0]), u])).mean(axis=0)
        assert within_se(s.data.y, pi, 3, k=4.0)


class TestShared:
    def test_chi_square_goodness_of_fit(self):
        pi = np.array([0.2, 0.5, 0.3])
        y = sample_mixture_responses(np.broadcast_to(pi, (100_000, 3)), np.random.default_rng(5))
        obs = np.bincount(y, minlength=4)[1:]
        assert stats.chisquare(obs, pi * 100_000).pvalue > 0.01

    def test_seeded(self):
        a = generate("example1", 30, rng=RngStream(4))
        b = generate("example1", 30, rng=RngStream(4))
        np.testing.assert_array_equal(a.data.y, b.data.y)
        np.testing.assert_array_equal(a.data.X, b.data.X)

    def test_unknown_design(self):
        with pytest.raises(InvalidArgument):
            generate("example9")

    def test_example_prior_dims(self):
        assert example_prior("example3", "General").p == 3
        assert example_prior("example2", "CommonWeights").C == 3
