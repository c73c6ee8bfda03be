import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from equilearn.bayes_game import (
    BayesianGame,
    BehaviorStrategy,
    GameError,
    MixedStrategy,
    ProfileMixture,
    ZeroProbabilityTypeError,
    conditional_reward_vector,
    default_sample_count,
    expected_utility,
    pure_strategies,
    random_game,
    reward_table,
    sampled_reward_vector,
)
from equilearn.equilibrium import counterexample_game, counterexample_mixture
from equilearn.finite_dist import FiniteDist
from oracles import reward_loops
from strategies import seeds


def small_game(seed=0, types=(2, 2), actions=(2, 2)):
    return random_game(np.random.default_rng(seed), types, actions)


def random_behavior(rng, K, n):
    return BehaviorStrategy(rng.dirichlet(np.ones(n), size=K))


class TestValidation:
    def test_well_formed(self):
        small_game()

    def test_utility_out_of_range_names_player_and_index(self):
        g = small_game()
        bad = g.utilities[1].copy()
        bad[1, 0, 1, 1] = 1.5
        with pytest.raises(GameError, match=r"player 1 at index \(1, 0, 1, 1\)"):
            BayesianGame(g.type_counts, g.action_counts, g.prior, (g.utilities[0], bad))

    def test_prior_not_normalized(self):
        g = small_game()
        with pytest.raises(GameError, match="not normalized"):
            BayesianGame(g.type_counts, g.action_counts, g.prior * 0.9, g.utilities)

    def test_shape_mismatch(self):
        g = small_game()
        with pytest.raises(GameError, match="shape"):
            BayesianGame(g.type_counts, g.action_counts, g.prior, (g.utilities[0], g.utilities[1][..., :1]))

    def test_zero_probability_types_allowed_in_game(self):
        prior = np.array([[0.5, 0.5], [0.0, 0.0]])
        g = BayesianGame((2, 2), (2, 2), prior, small_game().utilities)
        with pytest.raises(ZeroProbabilityTypeError):
            conditional_reward_vector(g, 0, 1, [None, BehaviorStrategy.uniform(2, 2)])
        assert np.all(np.isnan(reward_table(g, 0, [None, BehaviorStrategy.uniform(2, 2)])[1]))


class TestStrategies:
    def test_pure_strategy_count_and_order(self):
        assert pure_strategies(2, 3).tolist()[:4] == [[0, 0], [0, 1], [0, 2], [1, 0]]
        assert len(pure_strategies(3, 2)) == 8

    def test_behavior_product_semantics(self):
        rng = np.random.default_rng(0)
        x = random_behavior(rng, 3, 2)
        dist = x.to_pure_dist()
        for s in itertools.product(range(2), repeat=3):
            expected = np.prod([x.probs[k, s[k]] for k in range(3)])
            assert dist.probs[s] == pytest.approx(expected)
            assert x.prob(s) == pytest.approx(expected)

    def test_mixed_round_trip(self):
        rng = np.random.default_rng(1)
        w = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
        m = MixedStrategy.from_pure_dist(FiniteDist(w))
        assert np.allclose(m.to_pure_dist().probs, w)
        # per-type marginals of the correlated strategy
        assert np.allclose(m.type_marginals()[0], w.sum(axis=(1, 2)))

    def test_rejects_bad_rows(self):
        with pytest.raises(ValueError):
            BehaviorStrategy([[0.5, 0.6]])


class TestExpectedUtility:
    def test_constant_game(self):
        shape = (2, 3, 2, 2)
        g = BayesianGame((2, 3), (2, 2), np.full((2, 3), 1 / 6), (np.full(shape, 0.4), np.full(shape, 0.7)))
        rng = np.random.default_rng(2)
        prof = [random_behavior(rng, 2, 2), random_behavior(rng, 3, 2)]
        assert np.allclose(expected_utility(g, prof), [0.4, 0.7])
        assert np.allclose(reward_table(g, 0, prof), 0.4)

    def test_single_type_matches_matrix_contraction(self):
        g = small_game(3, (1, 1), (3, 2))
        rng = np.random.default_rng(3)
        x, y = rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(2))
        prof = [BehaviorStrategy([x]), BehaviorStrategy([y])]
        for i in range(2):
            assert expected_utility(g, prof)[i] == pytest.approx(x @ g.utilities[i][0, 0] @ y)

    def test_counterexample_player0_gets_zero(self):
        g = counterexample_game(6)
        mu = counterexample_mixture(6)
        raw = 3 * expected_utility(g, mu)[0] - 2
        assert raw == pytest.approx(0.0, abs=1e-12)

    def test_correlated_strategy_enumeration(self):
        # brute force over the pure strategy space of a correlated strategy
        g = small_game(4)
        rng = np.random.default_rng(4)
        w = rng.dirichlet(np.ones(4)).reshape(2, 2)
        mixed = MixedStrategy.from_pure_dist(FiniteDist(w))
        y = random_behavior(rng, 2, 2)
        total = 0.0
        for s in itertools.product(range(2), repeat=2):
            for t in itertools.product(range(2), repeat=2):
                for th in itertools.product(range(2), range(2)):
                    total += w[s] * y.prob(t) * g.prior[th] * g.utilities[0][th + (s[th[0]], t[th[1]])]
        assert expected_utility(g, [mixed, y])[0] == pytest.approx(total)

    def test_dimension_mismatch(self):
        g = small_game()
        with pytest.raises(GameError):
            expected_utility(g, [BehaviorStrategy.uniform(3, 2), BehaviorStrategy.uniform(2, 2)])

    @given(seeds, st.floats(0, 1))
    def test_linear_in_each_player(self, seed, lam):
        rng = np.random.default_rng(seed)
        g = random_game(rng, (2, 2), (2, 3))
        a, b = random_behavior(rng, 2, 2), random_behavior(rng, 2, 2)
        y = random_behavior(rng, 2, 3)
        mix = MixedStrategy(np.stack([a.probs, b.probs]), [lam, 1 - lam])
        lhs = expected_utility(g, [mix, y])
        rhs = lam * expected_utility(g, [a, y]) + (1 - lam) * expected_utility(g, [b, y])
        assert np.allclose(lhs, rhs)

    def test_profile_mixture_averages(self):
        g = small_game(5)
        rng = np.random.default_rng(5)
        comps = [(random_behavior(rng, 2, 2), random_behavior(rng, 2, 2)) for _ in range(3)]
        mu = ProfileMixture.uniform(comps)
        assert np.allclose(expected_utility(g, mu), np.mean([expected_utility(g, c) for c in comps], axis=0))


class TestRewards:
    def test_point_mass_single_type_opponent(self):
        g = small_game(6, (2, 1), (3, 2))
        y = BehaviorStrategy.pure([1], 2)
        for k in range(2):
            assert np.allclose(conditional_reward_vector(g, 0, k, [None, y]), g.utilities[0][k, 0, :, 1])

    def test_uniform_prior_brute_force(self):
        g = BayesianGame((2, 2), (2, 2), np.full((2, 2), 0.25), small_game(7).utilities)
        y = BehaviorStrategy.uniform(2, 2)
        for k in range(2):
            expected = [
                np.mean([g.utilities[0][k, t, j, a] for t in range(2) for a in range(2)]) for j in range(2)
            ]
            assert np.allclose(conditional_reward_vector(g, 0, k, [None, y]), expected)

    @given(seeds)
    def test_matches_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        g = random_game(rng, (2, 3, 1), (2, 2, 3))
        prof = [random_behavior(rng, K, n) for K, n in zip(g.type_counts, g.action_counts)]
        for i in range(3):
            table = reward_table(g, i, prof)
            assert np.allclose(table, reward_loops(g, i, [p.probs for p in prof]))
            assert np.all((table >= 0) & (table <= 1))

    def test_single_type_equals_unconditioned(self):
        g = small_game(8, (1, 1), (2, 3))
        y = BehaviorStrategy([[0.2, 0.3, 0.5]])
        r = conditional_reward_vector(g, 0, 0, [None, y])
        for j in range(2):
            x = BehaviorStrategy.pure([j], 2)
            assert r[j] == pytest.approx(expected_utility(g, [x, y])[0])


class TestSampledRewards:
    def test_point_mass_opponents_exact(self):
        # with one opponent type and pure play there is nothing left to sample
        g = small_game(9, (2, 1), (2, 3))
        y = BehaviorStrategy.pure([2], 3)
        for count in (1, 7):
            got = sampled_reward_vector(g, 0, 1, [None, y], count, np.random.default_rng(0))
            assert np.allclose(got, conditional_reward_vector(g, 0, 1, [None, y]))

    def test_reproducible(self):
        g = small_game(10)
        y = BehaviorStrategy.uniform(2, 2)
        a = sampled_reward_vector(g, 1, 0, [y, None], 50, np.random.default_rng(3))
        b = sampled_reward_vector(g, 1, 0, [y, None], 50, np.random.default_rng(3))
        assert np.array_equal(a, b)

    def test_close_to_exact(self):
        g = small_game(11)
        y = random_behavior(np.random.default_rng(11), 2, 2)
        for k in range(2):
            got = sampled_reward_vector(g, 0, k, [None, y], 10_000, np.random.default_rng(k))
            assert np.all(np.abs(got - conditional_reward_vector(g, 0, k, [None, y])) <= 0.05)

    def test_zero_sample_count(self):
        with pytest.raises(ValueError):
            sampled_reward_vector(small_game(), 0, 0, [None, BehaviorStrategy.uniform(2, 2)], 0, np.random.default_rng())

    def test_default_sample_count(self):
        assert default_sample_count(0.1, 2, 3, 2) == int(np.ceil(8 * np.log(2 * 3 * 2 / 0.1) / 0.01))
