import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoybench.channel import ChannelParams, PulseSet, click_probability, fock_yield
from decoybench.estimators import (
    PAPER_APPROX,
    DegenerateInputError,
    ObservedCounts,
    ResidualError,
    Truth,
    UnderdeterminedError,
    coefficient_matrix,
    estimate_dark_rate,
    scheme_validity,
    truncated_yield_solver,
    weak_decoy_bound_dark,
    weak_decoy_bound_nodark,
)
from decoybench.montecarlo import simulate_set, stream
from decoybench.photon_stats import multi_photon_fraction, poisson_pmf

mp.mp.dps = 50

PRESETS = [
    (ChannelParams(1e-4, 1e-6), 1e-4),
    (ChannelParams(1e-2, 1e-6), 1e-3),
    (ChannelParams(1e-2, 1e-6), 1e-2),
    (ChannelParams(0.5, 0.0), 0.05),
    (ChannelParams(1e-3, 0.0), 5e-4),
]


def analytic_q(eta, mu):
    return -math.expm1(-eta * mu)


class TestNoDarkBound:
    def test_paper_approx_is_half_eta(self):
        b = weak_decoy_bound_nodark(analytic_q(1e-4, 1e-4), 1e-4, mode=PAPER_APPROX)
        assert b.s1_lower == pytest.approx(5e-5, rel=1e-12)
        assert b.mode == PAPER_APPROX and not b.clipped and not b.dark_corrected

    def test_paper_approx_with_known_eta_is_exact(self):
        b = weak_decoy_bound_nodark(analytic_q(1e-4, 1e-4), 1e-4, mode=PAPER_APPROX, eta=1e-4)
        assert b.s1_lower == 1e-4 - 1e-4 / 2

    def test_all_counts_multi_photon_gives_zero(self):
        mu = 0.05
        b = weak_decoy_bound_nodark(multi_photon_fraction(mu), mu)
        assert b.s1_lower == 0.0
        assert not b.clipped

    def test_fock_stratified_oracle(self):
        eta, mu = mp.mpf("0.5"), mp.mpf("0.05")
        pmf = [mp.exp(-mu) * mu**n / mp.factorial(n) for n in range(80)]
        yields = [1 - (1 - eta) ** n for n in range(80)]
        q = mp.fsum(p * y for p, y in zip(pmf, yields))
        oracle = (q - mp.fsum(pmf[2:])) / pmf[1]
        b = weak_decoy_bound_nodark(float(q), 0.05)
        assert b.s1_lower == pytest.approx(float(oracle), rel=1e-10)

    def test_exact_mode_at_paper_point(self):
        b = weak_decoy_bound_nodark(analytic_q(1e-4, 1e-4), 1e-4)
        # 60-digit reference
        assert b.s1_lower == pytest.approx(5.00083332916325e-05, rel=1e-9)

    def test_clipping(self):
        b = weak_decoy_bound_nodark(0.0, 0.1)
        assert b.clipped and b.s1_lower == 0.0 and b.n1_lower == 0.0
        b = weak_decoy_bound_nodark(analytic_q(1e-4, 3e-4), 3e-4, mode=PAPER_APPROX)
        assert b.clipped and b.s1_lower == 0.0

    def test_degenerate(self):
        with pytest.raises(DegenerateInputError):
            weak_decoy_bound_nodark(0.0, 1e-16)
        with pytest.raises(ValueError):
            weak_decoy_bound_nodark(0.1, 0.1, mode="loose")

    @pytest.mark.parametrize("params,mu", PRESETS)
    def test_soundness_on_expectations(self, params, mu):
        q = click_probability(mu, params, include_dark=False)
        b = weak_decoy_bound_nodark(q, mu)
        assert b.s1_lower <= fock_yield(1, params) + 1e-12

    @settings(max_examples=200)
    @given(st.floats(1e-8, 1e-2), st.floats(0.0, 1.0))
    def test_exact_close_to_paper_formula(self, eta, frac):
        mu = max(eta * frac, 1e-12)
        b = weak_decoy_bound_nodark(analytic_q(eta, mu), mu)
        # the gap is eta*mu - mu^2/3 - eta^2 mu/2 + ..., so for mu << eta it sits
        # within rounding of eta*mu; allow a few ulps of s1 on top
        assert abs(b.s1_lower - (eta - mu / 2)) <= mu * eta + 1e-13 * eta


class TestDarkBound:
    def test_exact_cancellation(self):
        n, mu, s0 = 10**12, 1e-4, 1e-6
        n_t = round(n * s0 * math.exp(-mu) + n * multi_photon_fraction(mu))
        s0_hat = (n_t - n * multi_photon_fraction(mu)) / (n * math.exp(-mu))
        b = weak_decoy_bound_dark(ObservedCounts("weak", n_t), PulseSet("weak", mu, n), s0_hat)
        assert b.n1_lower == pytest.approx(0.0, abs=1e-3)
        assert b.dark_corrected

    def expected_nt(self, n, eta, mu, s0):
        # paper bookkeeping: darks on the vacuum part, photon clicks on the rest
        return n * s0 * math.exp(-mu) + n * analytic_q(eta, mu)

    def test_paper_point_perturbation(self):
        n, eta, mu, s0 = 10**14, 1e-4, 1e-4, 1e-6
        weak = PulseSet("weak", mu, n)
        obs = ObservedCounts("weak", round(self.expected_nt(n, eta, mu, s0)))
        exact = weak_decoy_bound_dark(obs, weak, s0)
        assert exact.s1_lower == pytest.approx(5.0008e-5, rel=1e-3)
        # darks outweigh the certifiable signal 100:1, so the bound dies once the
        # dark estimate is off by (q - P(n>=2)) e^mu / s0, about 0.5% relative
        threshold = (analytic_q(eta, mu) - multi_photon_fraction(mu)) * math.exp(mu) / s0
        assert threshold == pytest.approx(5.0e-3, rel=1e-3)
        b = weak_decoy_bound_dark(obs, weak, s0 * 1.002)
        assert not b.clipped
        assert b.s1_lower == pytest.approx(exact.s1_lower * (1 - 0.002 / threshold), rel=1e-6)
        b = weak_decoy_bound_dark(obs, weak, s0 * (1 + 1.01 * threshold))
        assert b.clipped and b.n1_lower == 0.0 and b.s1_lower == 0.0
        assert weak_decoy_bound_dark(obs, weak, s0 * 1.01).clipped

    @pytest.mark.parametrize("seed", range(5))
    def test_monte_carlo_truth(self, seed):
        params = ChannelParams(1e-2, 1e-6)
        weak = PulseSet("weak", 1e-3, 10**10)
        obs = simulate_set(weak, params, stream(seed, 0, "weak"))
        b = weak_decoy_bound_dark(obs, weak, params.s0)
        assert 0 < b.n1_lower <= obs.truth.n1

    @given(st.floats(0.0, 2e-6), st.floats(0.0, 2e-6))
    def test_monotone_in_s0_hat(self, a, b):
        lo, hi = sorted((a, b))
        weak = PulseSet("weak", 1e-4, 10**12)
        obs = ObservedCounts("weak", 1_000_500)
        assert weak_decoy_bound_dark(obs, weak, hi).s1_lower <= weak_decoy_bound_dark(obs, weak, lo).s1_lower

    @given(st.floats(1e-6, 1e-2), st.floats(1e-6, 1e-2))
    def test_monotone_n1_in_mu(self, a, b):
        lo, hi = sorted((a, b))
        obs = ObservedCounts("weak", 10**6)
        n1 = lambda mu: weak_decoy_bound_dark(obs, PulseSet("weak", mu, 10**9), 1e-6).n1_lower
        assert n1(hi) <= n1(lo)

    @given(st.integers(0, 10**6), st.floats(0.0, 1e-3))
    def test_never_negative(self, n_t, s0_hat):
        b = weak_decoy_bound_dark(ObservedCounts("weak", n_t), PulseSet("weak", 1e-3, 10**9), s0_hat)
        assert b.n1_lower >= 0.0 and 0.0 <= b.s1_lower <= 1.0
        raw = n_t - 10**9 * s0_hat * math.exp(-1e-3) - 10**9 * multi_photon_fraction(1e-3)
        assert b.clipped == (raw < 0)

    def test_inconsistent_counts(self):
        with pytest.raises(ValueError):
            weak_decoy_bound_dark(ObservedCounts("weak", 11), PulseSet("weak", 0.1, 10), 0.0)
        with pytest.raises(ValueError):
            ObservedCounts("weak", 5, Truth(1, 1, 1))


class TestValidity:
    def test_paper_boundary(self):
        v = scheme_validity(1e-4, 1e-4)
        assert v.valid and v.margin == 0.0

    def test_invalid(self):
        assert not scheme_validity(1e-4, 2e-4).valid

    def test_margin(self):
        v = scheme_validity(0.5, 0.2)
        assert v.valid and v.margin == pytest.approx(0.3, abs=1e-15)

    def test_target_fraction(self):
        assert scheme_validity(1e-2, 1.5e-2, target_fraction=0.25).valid
        assert not scheme_validity(1e-2, 1.5e-2, target_fraction=0.5).valid
        with pytest.raises(ValueError):
            scheme_validity(1e-2, 1e-3, target_fraction=1.0)


class TestDarkRate:
    def test_values(self):
        vac = PulseSet("vacuum", 0.0, 10**6)
        assert estimate_dark_rate(ObservedCounts("vacuum", 0), vac) == 0.0
        assert estimate_dark_rate(ObservedCounts("vacuum", 1), vac) == 1e-6

    def test_needs_vacuum(self):
        with pytest.raises(ValueError):
            estimate_dark_rate(ObservedCounts("weak", 0), PulseSet("weak", 0.1, 10))

    @pytest.mark.parametrize("seed", range(5))
    def test_binomial_sampling(self, seed):
        s0, m = 1e-6, 10**9
        vac = PulseSet("vacuum", 0.0, m)
        obs = simulate_set(vac, ChannelParams(0.1, s0), stream(seed, 0, "vacuum"))
        assert abs(estimate_dark_rate(obs, vac) - s0) <= 3 * math.sqrt(s0 / m)


def truncated_rates(yields, intensities):
    return [math.fsum(y * poisson_pmf(n, mu) for n, y in enumerate(yields)) for mu in intensities]


class TestSolver:
    def test_vacuum_only(self):
        r = truncated_yield_solver([(0.0, 0.3)], 0)
        assert r.y[0] == pytest.approx(0.3, abs=1e-15)

    def test_three_intensities(self):
        params = ChannelParams(0.5, 0.0)
        yields = [fock_yield(n, params) for n in range(3)]
        assert yields == [0.0, 0.5, 0.75]
        mus = [0.0, 0.1, 0.2]
        r = truncated_yield_solver(list(zip(mus, truncated_rates(yields, mus))), 2)
        np.testing.assert_allclose(r.y, yields, atol=1e-8)
        assert r.residual <= 1e-10

    def test_truncation_bias_with_full_fock_rates(self):
        # rates from the untruncated channel cannot be matched by three yields
        params = ChannelParams(0.5, 0.0)
        mus = [0.0, 0.1, 0.2]
        q = [click_probability(mu, params) for mu in mus]
        r = truncated_yield_solver(list(zip(mus, q)), 2)
        assert abs(r.y[2] - 0.75) > 0.05

    def test_condition_number_blows_up(self):
        conds = [
            truncated_yield_solver(
                [(mu, 0.0) for mu in np.linspace(0.0, 1.0, n + 1)], n
            ).condition_number
            for n in range(2, 11)
        ]
        assert all(b > a for a, b in zip(conds, conds[1:]))
        assert conds[-1] > 1e6

    def test_condition_number_is_singular_value_ratio(self):
        a = coefficient_matrix([0.0, 0.3, 0.6, 0.9], 3)
        sv = np.linalg.svd(a, compute_uv=False)
        r = truncated_yield_solver([(mu, 0.1) for mu in (0.0, 0.3, 0.6, 0.9)], 3)
        assert r.condition_number == pytest.approx(sv[0] / sv[-1], rel=1e-12)

    def test_underdetermined(self):
        with pytest.raises(UnderdeterminedError):
            truncated_yield_solver([(0.0, 0.1), (0.1, 0.2)], 2)
        with pytest.raises(UnderdeterminedError):
            truncated_yield_solver([(0.1, 0.1), (0.1, 0.2), (0.2, 0.3)], 2)

    def test_residual_check(self):
        obs = [(0.0, 0.9), (0.0, 0.1)]
        assert truncated_yield_solver(obs, 0).residual > 0.5
        with pytest.raises(ResidualError):
            truncated_yield_solver(obs, 0, max_residual=1e-3)

    def test_box_constraints(self):
        r = truncated_yield_solver([(0.0, 1.0), (0.5, 1.0), (1.0, 0.0)], 1)
        assert np.all((r.y >= 0.0) & (r.y <= 1.0))

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(0, 5),
        st.integers(0, 3),
        st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6),
    )
    def test_noiseless_recovery(self, n_max, extra, ys):
        yields = ys[: n_max + 1]
        mus = list(np.linspace(0.0, 1.0, n_max + 1 + extra))
        r = truncated_yield_solver(list(zip(mus, truncated_rates(yields, mus))), n_max)
        assert r.condition_number <= 1e8
        assert r.residual <= 1e-10
        np.testing.assert_allclose(r.y, yields, atol=1e-8)
