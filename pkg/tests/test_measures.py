"""Measure arithmetic: construction, TV distance, moments, transforms, thinning."""

import math
from fractions import Fraction

import numpy as np
import pytest

from grbb import JointPmf, Pmf, empirical_measure, joint_tv_distance, product_pmf, tv_distance
from oracles import dict_tv, exact_thin


def as_fraction_dict(p: Pmf) -> dict:
    return {int(v): Fraction(float(m)) for v, m in zip(p.support, p.masses)}


class TestConstruction:
    def test_validates_total(self):
        with pytest.raises(ValueError, match="sum to 1"):
            Pmf(np.array([0, 1]), np.array([0.5, 0.6]))

    def test_validates_order(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            Pmf(np.array([1, 0]), np.array([0.5, 0.5]))

    def test_validates_negative_mass(self):
        with pytest.raises(ValueError, match="negative"):
            Pmf(np.array([0, 1]), np.array([1.5, -0.5]))

    def test_validates_negative_value(self):
        with pytest.raises(ValueError, match="non-negative"):
            Pmf(np.array([-1, 0]), np.array([0.5, 0.5]))

    def test_immutable(self):
        p = Pmf.bernoulli(0.5)
        with pytest.raises(ValueError):
            p.masses[0] = 0.9

    def test_truncation_records_tail(self):
        p = Pmf.poisson(0.5)
        assert 0.0 < p.tail_mass <= 1e-12
        assert abs(p.masses.sum() + p.tail_mass - 1.0) <= 1e-12
        g = Pmf.geometric(0.5)
        assert 0.0 < g.tail_mass <= 1e-12

    def test_json_roundtrip(self):
        p = Pmf.poisson(1.3)
        q = Pmf.from_json_dict(p.to_json_dict())
        assert np.array_equal(p.support, q.support)
        assert np.array_equal(p.masses, q.masses)
        assert p.tail_mass == q.tail_mass


class TestTvDistance:
    def test_identical_deltas(self):
        assert tv_distance(Pmf.delta(0), Pmf.delta(0)) == 0.0

    def test_disjoint_deltas(self):
        assert tv_distance(Pmf.delta(0), Pmf.delta(1)) == 1.0

    def test_bernoulli_pair(self):
        # (|0.5-0.75| + |0.5-0.25|) / 2
        assert tv_distance(Pmf.bernoulli(0.5), Pmf.bernoulli(0.25)) == pytest.approx(0.25, abs=1e-15)

    def test_metric_axioms_on_random_pairs(self, rng):
        pmfs = [_random_pmf(rng) for _ in range(30)]
        for p in pmfs:
            assert tv_distance(p, p) == 0.0
        for _ in range(200):
            p, q, r = (pmfs[rng.integers(len(pmfs))] for _ in range(3))
            assert tv_distance(p, q) == pytest.approx(tv_distance(q, p), abs=0)
            assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12
            assert 0.0 <= tv_distance(p, q) <= 1.0


class TestJoint:
    def test_identical(self):
        d = JointPmf(np.array([[1.0]]))
        assert joint_tv_distance(d, d) == 0.0

    def test_disjoint(self):
        a = JointPmf(np.array([[1.0]]))
        b = JointPmf(np.array([[0.0, 0.0], [0.0, 1.0]]))
        assert joint_tv_distance(a, b) == 1.0

    def test_antidiagonal_vs_product(self):
        # uniform on {(1,0),(0,1)} against Bernoulli(1/2) x Bernoulli(1/2)
        u = JointPmf(np.array([[0.0, 0.5], [0.5, 0.0]]))
        prod = product_pmf(Pmf.bernoulli(0.5), Pmf.bernoulli(0.5))
        assert joint_tv_distance(u, prod) == pytest.approx(0.5, abs=1e-15)

    def test_marginal(self):
        j = JointPmf(np.array([[0.1, 0.2], [0.3, 0.4]]))
        m0 = j.marginal(0)
        assert m0.mass(0) == pytest.approx(0.3) and m0.mass(1) == pytest.approx(0.7)
        m1 = j.marginal(1)
        assert m1.mass(0) == pytest.approx(0.4) and m1.mass(1) == pytest.approx(0.6)

    def test_validates_total(self):
        with pytest.raises(ValueError, match="sum to 1"):
            JointPmf(np.array([[0.5, 0.1], [0.1, 0.1]]))


class TestEmpirical:
    def test_basic(self):
        p = empirical_measure(np.array([0, 0, 1, 3]))
        assert p.mass(0) == 0.5 and p.mass(1) == 0.25 and p.mass(3) == 0.25

    def test_singleton(self):
        assert empirical_measure(np.array([5])).mass(5) == 1.0

    def test_constant(self):
        p = empirical_measure(np.array([2, 2, 2]))
        assert p.mass(2) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            empirical_measure(np.array([], dtype=np.int64))

    def test_sums_exactly_to_one(self, rng):
        for _ in range(300):
            xi = rng.integers(0, 7, size=int(rng.integers(1, 400)))
            assert float(empirical_measure(xi).masses.sum()) == 1.0


class TestMoments:
    def test_delta(self):
        assert Pmf.delta(0).mean() == 0.0
        assert Pmf.delta(0).variance() == 0.0

    def test_bernoulli(self):
        for a in (0.1, 0.5, 0.9):
            p = Pmf.bernoulli(a)
            assert p.mean() == pytest.approx(a, abs=1e-15)
            assert p.variance() == pytest.approx(a * (1 - a), abs=1e-15)

    def test_truncated_poisson(self):
        p = Pmf.poisson(0.5)
        assert p.mean() == pytest.approx(0.5, abs=1e-10)
        assert p.variance() == pytest.approx(0.5, abs=1e-10)


class TestTransforms:
    def test_char_fn_at_zero(self, rng):
        for _ in range(20):
            p = _random_pmf(rng)
            assert p.char_fn(0.0) == pytest.approx(1.0, abs=1e-12)

    def test_char_fn_delta(self):
        for x in (0.3, 1.7, -2.0):
            assert Pmf.delta(0).char_fn(x) == pytest.approx(1.0, abs=0)

    def test_char_fn_bernoulli_at_pi(self):
        for a in (0.2, 0.5, 0.8):
            assert Pmf.bernoulli(a).char_fn(math.pi) == pytest.approx(1 - 2 * a, abs=1e-12)

    def test_char_fn_modulus_bounded(self, rng):
        for _ in range(50):
            p = _random_pmf(rng)
            x = float(rng.uniform(-10, 10))
            assert abs(p.char_fn(x)) <= 1.0 + 1e-12

    def test_mgf_at_zero(self, rng):
        assert _random_pmf(rng).mgf(0.0) == pytest.approx(1.0, abs=1e-12)
        assert Pmf.delta(0).mgf(3.0) == 1.0

    def test_mgf_bernoulli(self):
        # 0.5 + 0.5 e^{0.1}
        assert Pmf.bernoulli(0.5).mgf(0.1) == pytest.approx(1.0525854590378238, abs=1e-12)

    def test_mgf_rejects_negative(self):
        with pytest.raises(ValueError, match="lam"):
            Pmf.bernoulli(0.5).mgf(-0.1)


class TestThin:
    def test_identity(self, rng):
        p = _random_pmf(rng)
        assert tv_distance(p.thin(1.0), p) <= 1e-14

    def test_to_zero(self, rng):
        p = _random_pmf(rng)
        q = p.thin(0.0)
        assert q.mass(0) == pytest.approx(1.0 - p.tail_mass, abs=1e-12)

    def test_poisson_closure(self):
        # thinning Poisson(a) by p gives Poisson(ap)
        for a, p in [(0.8, 0.5), (1.5, 0.25), (0.3, 0.9)]:
            thinned = Pmf.poisson(a).thin(p)
            assert tv_distance(thinned, Pmf.poisson(a * p)) <= 1e-10

    def test_against_exact_fraction_oracle(self):
        d = {0: Fraction(1, 4), 2: Fraction(1, 2), 5: Fraction(1, 4)}
        p = Pmf.from_dict({k: float(v) for k, v in d.items()})
        got = p.thin(0.25)
        want = exact_thin(d, 1, 4)
        err = dict_tv({int(v): Fraction(float(m)) for v, m in zip(got.support, got.masses)}, want)
        assert float(err) <= 1e-13

    def test_composition(self, rng):
        for _ in range(10):
            p = _random_pmf(rng)
            a, b = rng.random(), rng.random()
            assert tv_distance(p.thin(a).thin(b), p.thin(a * b)) <= 1e-10

    def test_mean_scales(self, rng):
        for _ in range(10):
            p = _random_pmf(rng)
            a = float(rng.random())
            assert p.thin(a).mean() == pytest.approx(a * p.mean(), abs=1e-10)


def _random_pmf(rng) -> Pmf:
    k = int(rng.integers(1, 8))
    vals = np.sort(rng.choice(20, size=k, replace=False))
    w = rng.random(k)
    w /= w.sum()
    for i in np.argsort(-w):
        for _ in range(3):
            resid = 1.0 - float(w.sum())
            if resid == 0.0:
                break
            w[i] += resid
    return Pmf(vals, w)
