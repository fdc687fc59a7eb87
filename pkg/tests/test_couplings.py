"""Coupling constructions: marginal fidelity, structure, mismatch bounds."""

import numpy as np
import pytest

from grbb import (
    ReassignmentLaw,
    be_coupling_sample,
    be_coupling_samples,
    mb_coupling_sample,
    mb_coupling_samples,
    mismatch_probability,
    one_site_marginal,
    polya_second_color_samples,
    product_pmf,
    two_site_joint,
)
from grbb.couplings import urn_test_success_probability
from grbb.experiments import chi_square_pairs

MB = ReassignmentLaw.MAXWELL_BOLTZMANN
BE = ReassignmentLaw.BOSE_EINSTEIN


class TestStructure:
    def test_first_coordinates_shared(self, rng):
        for _ in range(50):
            s = mb_coupling_sample(7, 4, rng)
            assert s.y1 == s.x1
            s = be_coupling_sample(7, 4, rng)
            assert s.y1 == s.x1

    def test_mb_no_balls(self, rng):
        s = mb_coupling_sample(5, 0, rng)
        assert (s.x1, s.x2, s.y1, s.y2) == (0, 0, 0, 0)

    def test_be_full_first_site_forces_empty_second(self, rng):
        x1, x2, _ = be_coupling_samples(4, 3, 5000, rng)
        hit = x1 == 3
        assert hit.any()
        assert np.all(x2[hit] == 0)

    def test_urn_test_probability_values(self):
        assert urn_test_success_probability(3, 1, 1, 0) == pytest.approx(0.75, abs=1e-15)
        for L in (2, 3, 10):
            assert urn_test_success_probability(L, 0, 0, 0) == pytest.approx((L - 1) / L)

    def test_mb_second_site_mean(self, rng):
        # E[x2] = (N - N/L)/(L - 1) by the tower property
        L, N, ns = 10, 5, 10**6
        _, x2, _ = mb_coupling_samples(L, N, ns, rng)
        want = (N - N / L) / (L - 1)
        se = x2.std(ddof=1) / np.sqrt(ns)
        assert abs(x2.mean() - want) <= 3 * se


class TestMarginalFidelity:
    @pytest.mark.parametrize("L,N", [(10, 5), (20, 10)])
    def test_mb(self, L, N, rng):
        x1, x2, y2 = mb_coupling_samples(L, N, 10**6, rng)
        _, _, p_joint = chi_square_pairs(x1, x2, two_site_joint(MB, L, N).masses)
        m1 = one_site_marginal(MB, L, N)
        _, _, p_prod = chi_square_pairs(x1, y2, product_pmf(m1, m1).masses)
        assert p_joint > 1e-3
        assert p_prod > 1e-3

    @pytest.mark.parametrize("L,N", [(10, 5), (20, 10)])
    def test_be(self, L, N, rng):
        x1, x2, y2 = be_coupling_samples(L, N, 10**6, rng)
        _, _, p_joint = chi_square_pairs(x1, x2, two_site_joint(BE, L, N).masses)
        m1 = one_site_marginal(BE, L, N)
        _, _, p_prod = chi_square_pairs(x1, y2, product_pmf(m1, m1).masses)
        assert p_joint > 1e-3
        assert p_prod > 1e-3

    def test_be_two_bins_antidiagonal(self, rng):
        x1, x2, _ = be_coupling_samples(2, 2, 10**6, rng)
        assert np.all(x1 + x2 == 2)
        _, _, p = chi_square_pairs(x1, x2, two_site_joint(BE, 2, 2).masses)
        assert p > 1e-3

    def test_polya_urn_matches_one_site_marginal(self, rng):
        for L, N in [(3, 2), (10, 5)]:
            counts = polya_second_color_samples(L, N, 10**6, rng)
            marg = one_site_marginal(BE, L, N)
            _, _, p = chi_square_pairs(counts, np.zeros(counts.size, dtype=np.int64),
                                       marg.dense()[:, None])
            assert p > 1e-3


class TestMismatch:
    def test_rejects_tiny_samples(self, rng):
        with pytest.raises(ValueError):
            mismatch_probability("mb", 10, 5, 10, rng)

    def test_rejects_fd(self, rng):
        with pytest.raises(ValueError):
            mismatch_probability("fd", 10, 5, 10**4, rng)

    def test_mb_exact_half(self, rng):
        # two-case hand enumeration at L=2, N=1 gives exactly 1/2
        est, se = mismatch_probability("mb", 2, 1, 10**6, rng)
        assert abs(est - 0.5) <= 3 * se

    def test_zero_balls(self, rng):
        est, se = mismatch_probability("mb", 10, 0, 10**4, rng)
        assert est == 0.0 and se == 0.0
        est, _ = mismatch_probability("be", 10, 0, 10**4, rng)
        assert est == 0.0

    @pytest.mark.parametrize("which", ["mb", "be"])
    def test_bound_on_grid(self, which, rng):
        for L in (10, 20, 50):
            for N in (1, L // 2, L):
                est, se = mismatch_probability(which, L, N, 200_000, rng)
                assert est <= 2.0 * N / L**2 + 3.0 * se

    def test_worker_count_does_not_change_result(self):
        r1 = mismatch_probability("mb", 10, 5, 150_000, np.random.default_rng(99), workers=1)
        r2 = mismatch_probability("mb", 10, 5, 150_000, np.random.default_rng(99), workers=2)
        assert r1 == r2
