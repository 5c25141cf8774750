import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from crlmix.core import (
    OrdinalDataset,
    crl_to_cumlogit,
    cumlogit_to_pi,
    kernel_log_pmf,
    log_theta_to_pi,
    pi_to_theta,
    theta_to_pi,
)
from crlmix.errors import DataError, DomainError, InvalidArgument

thetas = st.lists(st.floats(-8, 8, allow_nan=False), min_size=1, max_size=6).map(np.array)


class TestThetaToPi:
    def test_hand_values(self):
        pi = theta_to_pi([1.0, -1.0])
        a, b = expit(1.0), expit(-1.0)
        np.testing.assert_allclose(pi, [a, b * (1 - a), (1 - a) * (1 - b)], rtol=0, atol=1e-15)
        np.testing.assert_allclose(pi, [0.73105858, 0.07232949, 0.19661193], atol=1e-8)

    def test_zero_logits_halve(self):
        np.testing.assert_allclose(theta_to_pi(np.zeros(3)), [0.5, 0.25, 0.125, 0.125])

    def test_broadcast_leading_axes(self, gen):
        th = gen.normal(size=(4, 5, 2))
        out = theta_to_pi(th)
        assert out.shape == (4, 5, 3)
        np.testing.assert_allclose(out[2, 3], theta_to_pi(th[2, 3]))

    def test_extreme_logits_stay_finite(self):
        pi = theta_to_pi([800.0, -800.0])
        assert np.all(np.isfinite(pi))
        np.testing.assert_allclose(pi.sum(), 1.0)

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidArgument):
            theta_to_pi([np.nan, 0.0])

    @settings(max_examples=200, deadline=None)
    @given(thetas)
    def test_simplex(self, th):
        pi = theta_to_pi(th)
        assert pi.shape == (th.size + 1,)
        assert np.all(pi >= 0)
        assert abs(pi.sum() - 1.0) < 1e-12

    @settings(max_examples=200, deadline=None)
    @given(thetas)
    def test_log_version_agrees(self, th):
        np.testing.assert_allclose(np.exp(log_theta_to_pi(th)), theta_to_pi(th), rtol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(thetas)
    def test_round_trip(self, th):
        np.testing.assert_allclose(pi_to_theta(theta_to_pi(th)), th, atol=1e-10, rtol=0)


class TestPiToTheta:
    def test_uniform(self):
        np.testing.assert_allclose(pi_to_theta([0.25] * 4), np.log([1 / 3, 1 / 2, 1.0]))

    @pytest.mark.parametrize("pi", [[0.0, 0.5, 0.5], [1.0, 0.0], [0.5, 0.5, 0.0]])
    def test_boundary_rejected(self, pi):
        with pytest.raises(DomainError):
            pi_to_theta(pi)

    def test_sum_checked(self):
        with pytest.raises(DomainError):
            pi_to_theta([0.3, 0.3, 0.3])


class TestKernel:
    def test_matches_pi(self, gen):
        th = gen.normal(size=3)
        pi = theta_to_pi(th)
        for y in range(1, 5):
            np.testing.assert_allclose(kernel_log_pmf(y, th), np.log(pi[y - 1]), rtol=1e-12)

    def test_broadcast(self, gen):
        th = gen.normal(size=(6, 2))
        y = np.array([1, 2, 3, 1, 2, 3])
        expect = np.log(theta_to_pi(th)[np.arange(6), y - 1])
        np.testing.assert_allclose(kernel_log_pmf(y, th), expect, rtol=1e-12)

    def test_out_of_range(self):
        with pytest.raises(InvalidArgument):
            kernel_log_pmf(4, [0.0, 0.0])


class TestCumLogit:
    def test_two_category_case(self):
        p = crl_to_cumlogit([1.0, -1.0])
        assert p.vartheta == -1.0
        np.testing.assert_allclose(p.kappa, [0.40760596], atol=1e-8)

    @settings(max_examples=200, deadline=None)
    @given(thetas)
    def test_same_distribution_and_monotone(self, th):
        p = crl_to_cumlogit(th)
        np.testing.assert_allclose(cumlogit_to_pi(p), theta_to_pi(th), atol=1e-12, rtol=0)
        assert np.all(np.diff(p.cutoffs) > 0)

    def test_needs_vector(self):
        with pytest.raises(InvalidArgument):
            crl_to_cumlogit(np.zeros((2, 2)))


class TestOrdinalDataset:
    def test_masses_and_upsilon(self, toy_data):
        m = toy_data.masses
        np.testing.assert_array_equal(m[:, 0], 1.0)
        np.testing.assert_array_equal(m[:, 1], (toy_data.y >= 2).astype(float))
        ups = toy_data.upsilon
        np.testing.assert_array_equal(ups[toy_data.y == 1, 0], 0.5)
        np.testing.assert_array_equal(ups[toy_data.y == 1, 1], 0.0)
        np.testing.assert_array_equal(ups[toy_data.y == 3], -0.5)

    def test_masses_follow_recursion(self, toy_data):
        Y = toy_data.onehot
        rec = 1.0 - np.cumsum(Y, axis=1)[:, :-1]
        rec = np.column_stack([np.ones(toy_data.n), rec[:, :-1]])
        np.testing.assert_array_equal(toy_data.masses, rec)

    def test_trial_rows(self, toy_data):
        assert toy_data.trial_rows[0].size == 7
        np.testing.assert_array_equal(toy_data.trial_rows[1], np.flatnonzero(toy_data.y >= 2))

    def test_read_only(self, toy_data):
        with pytest.raises(ValueError):
            toy_data.y[0] = 2

    def test_empty(self):
        d = OrdinalDataset.empty(4, 2)
        assert d.n == 0 and d.masses.shape == (0, 3)

    def test_bad_response_row(self):
        with pytest.raises(DataError) as err:
            OrdinalDataset([1, 4], np.ones((2, 1)), 3)
        assert err.value.row == 1

    def test_intercept_required(self):
        with pytest.raises(InvalidArgument):
            OrdinalDataset([1, 2], np.array([[1.0, 0.0], [0.0, 1.0]]), 2)

    def test_nonfinite_design(self):
        with pytest.raises(DataError):
            OrdinalDataset([1, 2], np.array([[1.0, np.inf], [1.0, 0.0]]), 2)

    def test_small_C(self):
        with pytest.raises(InvalidArgument):
            OrdinalDataset([1], np.ones((1, 1)), 1)
