from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracshe.gmmp import caputo_apply, make_weights, weights_unchecked
from fracshe.special_functions import DomainError, gamma_ratio

ALPHAS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
N_MAX = 10_000


@pytest.fixture(scope="module", params=ALPHAS)
def big_weights(request):
    return make_weights(request.param, N_MAX)


def test_example_alpha_half():
    w = make_weights(0.5, 3)
    np.testing.assert_array_equal(w.omega, [1.0, -0.5, -0.125, -0.0625])
    np.testing.assert_array_equal(w.b, [1.0, 0.5, 0.375, 0.3125])


def test_omega_against_binomial_mpmath():
    # omega_k = (-1)^k binom(alpha, k), independent high-precision route
    w = make_weights(0.37, 40)
    with mp.workdps(40):
        ref = [float((-1) ** k * mp.binomial(mp.mpf("0.37"), k)) for k in range(41)]
    np.testing.assert_allclose(w.omega, ref, rtol=1e-13)


def test_arrays_read_only():
    w = make_weights(0.5, 4)
    with pytest.raises(ValueError):
        w.omega[1] = 0.0


class TestLemmaInvariants:
    def test_signs_exact(self, big_weights):
        w = big_weights
        assert w.omega[0] == 1.0
        assert np.all(w.omega[1:] < 0.0)
        assert np.all(np.abs(w.omega[2:]) < np.abs(w.omega[1:-1]))

    def test_partial_sums(self, big_weights):
        w = big_weights
        assert w.b[0] == 1.0
        assert np.all(np.diff(w.b) < 0.0)
        assert np.all(w.b > 0.0)
        neg_tail = 1.0 - w.b[1:]  # -sum_{k=1}^n omega_k
        assert np.all((neg_tail > 0.0) & (neg_tail < 1.0))

    def test_difference_is_omega(self, big_weights):
        w = big_weights
        np.testing.assert_allclose(np.diff(w.b), w.omega[1:], rtol=0, atol=1e-15)

    def test_b_closed_form(self, big_weights):
        # b_n = Gamma(n+1-alpha) / (Gamma(1-alpha) Gamma(n+1)) = prod_{k<=n} (1 - alpha/k),
        # built in 30-digit arithmetic: rounding n+1-alpha to a double already
        # perturbs the Gamma ratio by ~1e-11 at n = 1e4
        w = big_weights
        with mp.workdps(30):
            a = mp.mpf(w.alpha)
            closed = [mp.mpf(1)]
            for k in range(1, N_MAX + 1):
                closed.append(closed[-1] * (1 - a / k))
            closed = np.array([float(c) for c in closed])
        assert np.max(np.abs(w.b - closed)) <= 1e-12

    def test_b_closed_form_gamma_ratio(self, big_weights):
        w = big_weights
        a = w.alpha
        for n in range(0, 200):
            assert w.b[n] == pytest.approx(gamma_ratio(n + 1.0 - a, n + 1.0) / math.gamma(1.0 - a), abs=1e-12)

    def test_omega_closed_form(self, big_weights):
        # omega_k = Gamma(k-alpha) / (Gamma(-alpha) Gamma(k+1))
        w = big_weights
        a = w.alpha
        g = math.gamma(-a)
        for k in range(1, 65):
            assert w.omega[k] == pytest.approx(gamma_ratio(k - a, k + 1.0) / g, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.01, 0.99), n=st.integers(1, 400))
def test_invariants_random_alpha(alpha, n):
    w = make_weights(alpha, n)
    assert w.omega[0] == 1.0 and np.all(w.omega[1:] < 0)
    assert np.all(np.diff(w.b) < 0) and w.b[-1] > 0
    assert abs(w.b[-1] - math.fsum(w.omega)) <= 1e-15


def test_alpha_one_degeneration():
    w = weights_unchecked(1.0, 6)
    np.testing.assert_array_equal(w.omega, [1.0, -1.0, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(w.b, [1.0, 0, 0, 0, 0, 0, 0])


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.2])
def test_guard(alpha):
    with pytest.raises(DomainError):
        make_weights(alpha, 5)


def test_guard_n_max():
    with pytest.raises(DomainError):
        make_weights(0.5, 0)


class TestCaputo:
    def test_constant_exact_zero(self):
        w = make_weights(0.3, 50)
        assert caputo_apply(w, np.full(51, 3.7), 0.01) == 0.0

    def test_linear(self):
        tau = 1 / 1024
        w = make_weights(0.5, 1024)
        t = np.arange(1025) * tau
        assert abs(caputo_apply(w, t, tau) - 1.0 / math.gamma(1.5)) <= 5e-3

    def test_quadratic(self):
        tau = 1 / 1024
        w = make_weights(0.5, 1024)
        t = np.arange(1025) * tau
        assert abs(caputo_apply(w, t**2, tau) - 2.0 / math.gamma(2.5)) <= 1e-2

    @pytest.mark.parametrize("p", [1, 2])
    def test_first_order_decrease(self, p):
        exact = math.gamma(p + 1) / math.gamma(p + 0.5)
        errs = []
        for k in (128, 256, 512, 1024, 2048):
            w = make_weights(0.5, k)
            t = np.arange(k + 1) / k
            errs.append(abs(caputo_apply(w, t**p, 1.0 / k) - exact))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(ratios >= 1.7)

    def test_length_mismatch(self):
        w = make_weights(0.5, 3)
        with pytest.raises(ValueError):
            caputo_apply(w, np.zeros(5), 0.1)
        with pytest.raises(ValueError):
            caputo_apply(w, [], 0.1)

    def test_bad_tau(self):
        with pytest.raises(DomainError):
            caputo_apply(make_weights(0.5, 3), [0.0, 1.0], 0.0)
