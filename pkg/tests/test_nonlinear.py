"""Measure recursion, single-site process, queue stationary theory, fixed points."""

import cmath
import math

import numpy as np
import pytest

from grbb import (
    Pmf,
    ReassignmentLaw,
    UnstableQueueError,
    drift_constants,
    evolve_measure,
    fixed_point,
    iterate_measure,
    limit_law,
    queue_stationary,
    queue_step,
    simulate_nonlinear_path,
    stationary_char_fn,
    stationary_mean,
    tv_distance,
)
from grbb import _kernels
from grbb.experiments import chi_square_pairs

FD = ReassignmentLaw.FERMI_DIRAC
MB = ReassignmentLaw.MAXWELL_BOLTZMANN
BE = ReassignmentLaw.BOSE_EINSTEIN
ALL_LAWS = (FD, MB, BE)


class TestEvolve:
    def test_empty_is_fixed(self):
        for law in ALL_LAWS:
            out = evolve_measure(law, Pmf.delta(0))
            assert out.mass(0) == pytest.approx(1.0, abs=1e-13)

    def test_fd_delta_one_fixed(self):
        out = evolve_measure(FD, Pmf.delta(1))
        assert out.mass(1) == pytest.approx(1.0, abs=1e-13)

    def test_mb_delta_one_gives_poisson(self):
        out = evolve_measure(MB, Pmf.delta(1))
        assert tv_distance(out, Pmf.poisson(1.0)) <= 1e-12

    def test_fd_bernoulli_fixed_family(self):
        for a in (0.1, 0.4, 0.9):
            b = Pmf.bernoulli(a)
            assert tv_distance(evolve_measure(FD, b), b) <= 1e-13

    def test_mean_conserved_one_step(self, rng):
        for law in ALL_LAWS:
            for _ in range(10):
                q = _random_sub_mean_pmf(rng)
                out = evolve_measure(law, q)
                assert out.mean() == pytest.approx(q.mean(), abs=2e-12)


class TestIterate:
    def test_zero_horizon(self):
        q0 = Pmf.bernoulli(0.3)
        assert iterate_measure(MB, q0, 0) == [q0]

    def test_fd_constant_sequence(self):
        seq = iterate_measure(FD, Pmf.bernoulli(0.35), 20)
        for q in seq:
            assert tv_distance(q, Pmf.bernoulli(0.35)) <= 1e-12

    def test_mb_delta_one_three_steps(self):
        seq = iterate_measure(MB, Pmf.delta(1), 2)
        assert len(seq) == 3
        assert tv_distance(seq[1], Pmf.poisson(1.0)) <= 1e-12
        for q in seq:
            assert q.mean() == pytest.approx(1.0, abs=1e-11)

    def test_mean_conserved_long_run(self, rng):
        for law in ALL_LAWS:
            q0 = _random_sub_mean_pmf(rng)
            seq = iterate_measure(law, q0, 50)
            for t, q in enumerate(seq):
                assert abs(q.mean() - q0.mean()) <= t * 1e-10 + 1e-11


class TestNonlinearPath:
    def test_frozen_at_zero(self, rng):
        path = simulate_nonlinear_path(MB, Pmf.delta(0), 50, rng)
        assert np.array_equal(path, np.zeros(51, dtype=np.int64))

    def test_fd_delta_one_constant(self, rng):
        path = simulate_nonlinear_path(FD, Pmf.delta(1), 50, rng)
        assert np.array_equal(path, np.ones(51, dtype=np.int64))

    def test_mb_one_step_matches_recursion(self, rng):
        n = 10**5
        draws = np.empty(n, dtype=np.int64)
        for i in range(n):
            draws[i] = simulate_nonlinear_path(MB, Pmf.delta(1), 1, rng)[1]
        expect = Pmf.poisson(1.0).dense()[:, None]
        _, _, p = chi_square_pairs(draws, np.zeros(n, dtype=np.int64), expect)
        assert p > 1e-3


class TestQueueStep:
    def test_empty_no_arrivals(self, rng):
        assert queue_step(Pmf.delta(0), 0, rng) == 0

    def test_deterministic_arithmetic(self, rng):
        assert queue_step(Pmf.delta(2), 3, rng) == 4

    def test_unit_arrivals_freeze(self, rng):
        z = 5
        for _ in range(30):
            z = queue_step(Pmf.delta(1), z, rng)
            assert z == 5


class TestQueueStationary:
    def test_empty_arrivals(self):
        pi = queue_stationary(Pmf.delta(0))
        assert pi.mass(0) == 1.0

    def test_bernoulli_two_state_balance(self):
        pi = queue_stationary(Pmf.bernoulli(0.3))
        assert tv_distance(pi, Pmf.bernoulli(0.3)) <= 1e-10

    def test_poisson_mean(self):
        pi = queue_stationary(Pmf.poisson(0.5))
        assert pi.mean() == pytest.approx(0.75, abs=1e-8)

    def test_unstable_rejected(self):
        with pytest.raises(UnstableQueueError, match="unstable queue"):
            queue_stationary(Pmf.poisson(1.2))
        with pytest.raises(UnstableQueueError):
            queue_stationary(Pmf.delta(1))

    def test_random_laws_cross_validated(self, rng):
        for _ in range(20):
            mu = _random_sub_mean_pmf(rng, max_mean=0.94)
            pi = queue_stationary(mu)
            assert abs(pi.mean() - stationary_mean(mu)) <= 1e-8
            for x in (0.1, 0.5, 1.0, 2.0):
                assert abs(pi.char_fn(x) - stationary_char_fn(mu, x)) <= 1e-8


class TestClosedForms:
    def test_char_fn_at_zero_is_one(self):
        assert stationary_char_fn(Pmf.poisson(0.4), 0.0) == 1.0
        assert stationary_char_fn(Pmf.poisson(0.4), 2 * math.pi) == 1.0

    def test_char_fn_empty_arrivals(self):
        for x in (0.3, 1.0, 2.5):
            assert stationary_char_fn(Pmf.delta(0), x) == pytest.approx(1.0, abs=1e-12)

    def test_char_fn_bernoulli_identity(self):
        # algebra collapses to the arrival characteristic function itself
        for a in (0.2, 0.7):
            for x in (0.1, 0.9, 2.2):
                want = 1 - a + a * cmath.exp(1j * x)
                got = stationary_char_fn(Pmf.bernoulli(a), x)
                assert got == pytest.approx(want, abs=1e-12)

    def test_mean_examples(self):
        assert stationary_mean(Pmf.delta(0)) == 0.0
        for a in (0.1, 0.5, 0.9):
            assert stationary_mean(Pmf.bernoulli(a)) == pytest.approx(a, abs=1e-12)
        assert stationary_mean(Pmf.poisson(0.5)) == pytest.approx(0.75, abs=1e-10)


class TestDriftConstants:
    def test_empty_arrivals(self):
        dc = drift_constants(Pmf.delta(0), 0.1)
        want = 1.0 - math.exp(-0.1)
        assert dc.gamma == pytest.approx(want, abs=1e-12)
        assert dc.C == pytest.approx(want, abs=1e-12)
        assert dc.in_range

    def test_bernoulli_frozen_values(self):
        dc = drift_constants(Pmf.bernoulli(0.5), 0.1)
        assert dc.gamma == pytest.approx(0.0475814, abs=1e-6)
        assert dc.C == pytest.approx(0.1001668, abs=1e-6)
        assert dc.in_range

    def test_flagged_out_of_range(self):
        # finite-support law with e^{-lam} M(lam) >= 1
        mu = Pmf.from_dict({0: 0.55, 2: 0.45})
        dc = drift_constants(mu, 2.0)
        assert dc.gamma < 0.0
        assert not dc.in_range

    def test_truncated_tail_refused_at_large_lam(self):
        # the truncated Poisson mgf is unreliable at lam = 2
        with pytest.raises(ValueError, match="unreliable"):
            drift_constants(Pmf.poisson(0.9), 2.0)

    def test_rejects_nonpositive_lam(self):
        with pytest.raises(ValueError):
            drift_constants(Pmf.bernoulli(0.2), 0.0)

    def test_one_step_drift_inequality(self, rng):
        # E[f(next) | z] - f(z) <= -gamma f(z) + C for f = exp(lam .)
        for _ in range(10):
            mu = _random_sub_mean_pmf(rng, max_mean=0.9)
            lam = float(rng.uniform(0.01, 0.2))
            dc = drift_constants(mu, lam)
            if not dc.in_range:
                continue
            m = mu.mgf(lam)
            for z in range(51):
                served = z - 1 if z > 0 else 0
                lhs = math.exp(lam * served) * m - math.exp(lam * z)
                assert lhs <= -dc.gamma * math.exp(lam * z) + dc.C + 1e-12

    def test_exponential_moment_bounded_monte_carlo(self, rng):
        mu = Pmf.from_dict({0: 0.5, 1: 0.3, 2: 0.2})  # mean 0.7
        lam = 0.1
        dc = drift_constants(mu, lam)
        assert dc.in_range
        vals, cdf = mu.sampling_arrays()
        reps, T, z0 = 400, 1000, 3
        ends = np.empty(reps)
        for i in range(reps):
            path = _kernels.queue_path(vals, cdf, z0, T, rng)
            ends[i] = math.exp(lam * path[-1])
        se = ends.std(ddof=1) / math.sqrt(reps)
        assert ends.mean() <= dc.C / dc.gamma + math.exp(lam * z0) + 5 * se


class TestFixedPoint:
    def test_fd_identity(self):
        fp = fixed_point(FD, 0.4)
        assert fp.a_star == pytest.approx(0.4, abs=1e-8)
        assert tv_distance(fp.pi_bar, Pmf.bernoulli(0.4)) <= 1e-9

    def test_mb_quadratic(self):
        fp = fixed_point(MB, 0.75)
        assert fp.a_star == pytest.approx(0.5, abs=1e-8)

    def test_be_ratio(self):
        fp = fixed_point(BE, 0.5)
        assert fp.a_star == pytest.approx(1 / 3, abs=1e-8)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            fixed_point(MB, 1.0)
        with pytest.raises(ValueError):
            fixed_point(MB, -0.1)

    def test_residual_and_consistency_grid(self):
        for law in ALL_LAWS:
            for r in (0.1, 0.3, 0.5, 0.7, 0.9):
                fp = fixed_point(law, r)
                assert fp.residual_tv <= 1e-8
                assert tv_distance(evolve_measure(law, fp.pi_bar), fp.pi_bar) <= 1e-8
                assert fp.pi_bar.mean() == pytest.approx(r, abs=1e-7)

    def test_stationary_mean_monotone_in_arrival_mean(self):
        # bisection in the solver relies on this monotonicity
        for law in ALL_LAWS:
            grid = np.linspace(0.0, 0.98, 50)
            means = [stationary_mean(limit_law(law, 1.0 - a, tail_tol=1e-14)) for a in grid]
            assert all(m2 > m1 - 1e-12 for m1, m2 in zip(means, means[1:]))

    def test_convergence_toward_fixed_point(self):
        # short-horizon contraction check; the long-horizon one is in acceptance
        for law in ALL_LAWS:
            fp = fixed_point(law, 0.5)
            seq = iterate_measure(law, Pmf.bernoulli(0.5), 300)
            early = tv_distance(seq[10], fp.pi_bar)
            late = tv_distance(seq[300], fp.pi_bar)
            assert late <= early + 1e-9  # slack covers the truncation floor
            assert late <= 1e-4


def _random_sub_mean_pmf(rng, max_mean: float = 0.95) -> Pmf:
    """Random finite-support law with mean strictly below max_mean."""
    k = int(rng.integers(2, 7))
    vals = np.arange(k)
    w = rng.random(k)
    w /= w.sum()
    target = float(rng.uniform(0.05, max_mean))
    m = float(vals @ w)
    if m > target:
        # shift mass to zero until the mean hits the target
        scale = target / m
        w *= scale
        w[0] += 1.0 - w.sum()
    w[np.argmax(w)] += 1.0 - w.sum()
    return Pmf(vals, w)
