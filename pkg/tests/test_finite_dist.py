import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from equilearn.finite_dist import (
    DistributionError,
    FiniteDist,
    MixtureOfProducts,
    ProductDist,
    behaviorize,
    condition,
    enumerate_domain,
    marginal,
    sample,
    tv_distance,
)
from experiments import tv_decomposition_gap, behaviorize_tv_excess
from strategies import dists, joints, seeds

SKEWED = FiniteDist(np.array([[0.1, 0.3], [0.6, 0.0]]))


class TestConstruction:
    def test_rejects_negative_entries(self):
        with pytest.raises(DistributionError):
            FiniteDist([0.5, -0.1, 0.6])

    def test_rejects_unnormalized(self):
        with pytest.raises(DistributionError):
            FiniteDist([0.5, 0.4])

    def test_tolerance_is_one_in_a_billion(self):
        FiniteDist([0.5, 0.5 + 5e-10])
        with pytest.raises(DistributionError):
            FiniteDist([0.5, 0.5 + 5e-9])

    def test_immutable(self):
        d = FiniteDist([0.25, 0.75])
        with pytest.raises(ValueError):
            d.probs[0] = 1.0

    def test_point_mass_and_uniform(self):
        assert FiniteDist.point_mass((2, 3), (1, 2)).probs[1, 2] == 1.0
        assert np.allclose(FiniteDist.uniform(4).probs, 0.25)

    def test_normalized_never_silent_elsewhere(self):
        assert np.allclose(FiniteDist.normalized([1, 3]).probs, [0.25, 0.75])


class TestTv:
    def test_identity(self):
        d = FiniteDist([0.2, 0.8])
        assert tv_distance(d, d) == 0.0

    def test_disjoint_supports(self):
        assert tv_distance(FiniteDist([1.0, 0.0]), FiniteDist([0.0, 1.0])) == 1.0

    def test_hand_value(self):
        assert tv_distance(FiniteDist([0.5, 0.5]), FiniteDist([0.8, 0.2])) == pytest.approx(0.3)

    def test_shape_mismatch(self):
        with pytest.raises(DistributionError):
            tv_distance(FiniteDist([1.0]), FiniteDist([0.5, 0.5]))

    @given(st.integers(1, 5).flatmap(lambda n: st.tuples(dists(n), dists(n), dists(n))))
    def test_metric(self, pqr):
        p, q, r = pqr
        d = tv_distance(p, q)
        assert 0.0 <= d <= 1.0 + 1e-12
        assert d == pytest.approx(tv_distance(q, p))
        assert d <= tv_distance(p, r) + tv_distance(r, q) + 1e-12


class TestConditionMarginal:
    def test_marginal_hand_value(self):
        assert np.allclose(marginal(SKEWED, 0).probs, [0.4, 0.6])

    def test_condition_hand_value(self):
        assert np.allclose(condition(SKEWED, 0).probs, [0.25, 0.75])

    def test_condition_on_product_returns_factor(self):
        y = FiniteDist([0.1, 0.2, 0.7])
        joint = ProductDist([FiniteDist([0.3, 0.7]), y]).joint()
        for x in range(2):
            assert np.allclose(condition(joint, x).probs, y.probs)

    def test_uniform_symmetry(self):
        assert np.allclose(condition(FiniteDist.uniform((2, 2)), 0).probs, [0.5, 0.5])

    def test_point_mass_marginal(self):
        assert marginal(FiniteDist.point_mass((3, 2), (2, 1)), 0) == FiniteDist.point_mass(3, 2)

    def test_zero_mass_names_the_coordinate(self):
        joint = FiniteDist(np.array([[0.5, 0.5], [0.0, 0.0]]))
        with pytest.raises(DistributionError, match="axis 0 = 1"):
            condition(joint, 1)

    def test_condition_other_axis(self):
        assert np.allclose(condition(SKEWED, 1, axis=1).probs, [1.0, 0.0])

    @given(joints())
    def test_chain_rule(self, joint):
        px = marginal(joint, 0).probs
        for x in np.flatnonzero(px > 0):
            assert np.allclose(px[x] * condition(joint, int(x)).probs, joint.probs[x])


class TestSample:
    def test_point_mass_always(self):
        rng = np.random.default_rng(0)
        d = FiniteDist.point_mass(5, 3)
        assert all(sample(d, rng) == 3 for _ in range(100))

    def test_reproducible(self):
        d = FiniteDist([0.2, 0.3, 0.5])
        a = sample(d, np.random.default_rng(7), size=50)
        b = sample(d, np.random.default_rng(7), size=50)
        assert np.array_equal(a, b)

    def test_frequencies(self):
        draws = sample(FiniteDist([0.3, 0.7]), np.random.default_rng(1), size=100_000)
        freq = np.bincount(draws, minlength=2) / draws.size
        assert np.all(np.abs(freq - [0.3, 0.7]) <= 0.01)

    def test_tuple_domain(self):
        out = sample(SKEWED, np.random.default_rng(2))
        assert isinstance(out, tuple) and len(out) == 2
        draws = sample(SKEWED, np.random.default_rng(3), size=2000)
        assert not np.any((draws[:, 0] == 1) & (draws[:, 1] == 1))

    @given(dists(), seeds)
    def test_never_draws_zero_mass(self, d, seed):
        draws = sample(d, np.random.default_rng(seed), size=200)
        assert np.all(d.probs[draws] > 0)


class TestProducts:
    def test_product_prob_matches_joint(self):
        f = [FiniteDist([0.2, 0.8]), FiniteDist([0.5, 0.25, 0.25])]
        p = ProductDist(f)
        for x in enumerate_domain(p.shape):
            assert p.prob(x) == pytest.approx(f[0].probs[x[0]] * f[1].probs[x[1]])
            assert p.joint().probs[x] == pytest.approx(p.prob(x))

    def test_mixture_average(self):
        a = ProductDist([FiniteDist([1.0, 0.0]), FiniteDist([0.0, 1.0])])
        b = ProductDist([FiniteDist([0.0, 1.0]), FiniteDist([1.0, 0.0])])
        mix = MixtureOfProducts([a, b])
        assert mix.rank == 2
        assert mix.prob((0, 1)) == 0.5 and mix.prob((0, 0)) == 0.0

    def test_mixture_rejects_mismatched_domains(self):
        a = ProductDist([FiniteDist([1.0, 0.0])])
        b = ProductDist([FiniteDist([1.0, 0.0, 0.0])])
        with pytest.raises(DistributionError):
            MixtureOfProducts([a, b])

    @given(st.lists(st.tuples(dists(2), dists(3)), min_size=1, max_size=4))
    def test_mixture_mass_sums_to_one(self, comps):
        mix = MixtureOfProducts([ProductDist(list(c)) for c in comps])
        total = sum(mix.prob(x) for x in enumerate_domain(mix.shape))
        assert abs(total - 1.0) <= 1e-9


class TestBehaviorize:
    def test_correlated_bits(self):
        # 1/3 all-zeros + 2/3 all-ones over three binary coordinates
        w = np.zeros((2, 2, 2))
        w[0, 0, 0], w[1, 1, 1] = 1 / 3, 2 / 3
        prod = behaviorize(FiniteDist(w))
        for f in prod.factors:
            assert np.allclose(f.probs, [1 / 3, 2 / 3])

    def test_product_is_fixed_point(self):
        p = ProductDist([FiniteDist([0.1, 0.9]), FiniteDist([0.6, 0.4])])
        back = behaviorize(p.joint())
        for a, b in zip(back.factors, p.factors):
            assert np.allclose(a.probs, b.probs, atol=1e-15)

    def test_point_mass(self):
        prod = behaviorize(FiniteDist.point_mass((2, 3), (1, 0)))
        assert prod.joint() == FiniteDist.point_mass((2, 3), (1, 0))

    @given(joints(shape=(2, 3)))
    def test_preserves_marginals(self, joint):
        prod = behaviorize(joint)
        for axis in range(2):
            assert np.array_equal(prod.factors[axis].probs, marginal(joint, axis).probs)


def test_tv_decomposes_over_shared_marginal():
    rng = np.random.default_rng(11)
    assert max(tv_decomposition_gap(rng) for _ in range(300)) <= 1e-9


def test_behaviorize_at_most_doubles_tv():
    rng = np.random.default_rng(12)
    assert max(behaviorize_tv_excess(rng) for _ in range(300)) <= 1e-9


def test_behaviorize_tv_near_product():
    # w close to q stresses the factor 2
    rng = np.random.default_rng(13)
    for _ in range(100):
        q = ProductDist([FiniteDist(rng.dirichlet(np.ones(3))) for _ in range(2)]).joint()
        w = FiniteDist.normalized(q.probs + 0.05 * rng.random((3, 3)))
        assert tv_distance(behaviorize(w).joint(), q) <= 2 * tv_distance(w, q) + 1e-9


def test_enumerate_domain_row_major():
    assert list(enumerate_domain((2, 2))) == list(itertools.product(range(2), range(2)))
