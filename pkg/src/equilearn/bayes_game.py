"""Finite Bayesian games and the strategy objects played in them.

A game with ``m`` players stores a dense prior over type profiles (shape
``type_counts``) and, per player, a utility table of shape
``type_counts + action_counts`` with entries in ``[0, 1]``.

A player's strategy is a distribution over pure strategies ``s: types ->
actions``. Two representations are used:

* :class:`BehaviorStrategy` -- an independent action distribution per type,
  stored as a ``(K, n)`` row-stochastic array.
* :class:`MixedStrategy` -- a weighted mixture of behavior strategies. Point
  masses on pure strategies are behavior strategies, so every distribution
  over pure strategies has this form.

Players are always independent of one another inside a profile; correlation
across players is expressed with :class:`ProfileMixture`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from equilearn.finite_dist import NORMALIZATION_TOL, DistributionError, FiniteDist

UTILITY_TOL = 1e-12


class GameError(ValueError):
    """Invalid game definition or incompatible strategy dimensions."""


class ZeroProbabilityTypeError(GameError):
    """An operation conditioned on a type with zero prior marginal."""


def _readonly(arr, dtype=np.float64) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class BayesianGame:
    type_counts: tuple[int, ...]
    action_counts: tuple[int, ...]
    prior: np.ndarray
    utilities: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "type_counts", tuple(int(k) for k in self.type_counts))
        object.__setattr__(self, "action_counts", tuple(int(n) for n in self.action_counts))
        object.__setattr__(self, "prior", _readonly(self.prior))
        object.__setattr__(self, "utilities", tuple(_readonly(u) for u in self.utilities))
        validate_game(self)

    @property
    def num_players(self) -> int:
        return len(self.type_counts)

    @property
    def prior_dist(self) -> FiniteDist:
        return FiniteDist(self.prior)

    def type_marginal(self, i: int) -> np.ndarray:
        axes = tuple(j for j in range(self.num_players) if j != i)
        return self.prior.sum(axis=axes) if axes else self.prior.copy()

    def conditional_prior(self, i: int, k: int) -> np.ndarray:
        """Prior over full type profiles conditioned on ``theta_i = k``.

        The result has the shape of ``prior`` and is zero off the slice
        ``theta_i = k``.
        """
        mass = self.type_marginal(i)[k]
        if mass <= 0:
            raise ZeroProbabilityTypeError(
                f"type {k} of player {i} has zero prior probability"
            )
        out = np.zeros_like(self.prior)
        index = [slice(None)] * self.num_players
        index[i] = k
        out[tuple(index)] = self.prior[tuple(index)] / mass
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, BayesianGame):
            return NotImplemented
        return (
            self.type_counts == other.type_counts
            and self.action_counts == other.action_counts
            and np.array_equal(self.prior, other.prior)
            and all(np.array_equal(a, b) for a, b in zip(self.utilities, other.utilities))
        )

    __hash__ = None


def validate_game(g: BayesianGame) -> None:
    """Raise :class:`GameError` describing the first violated invariant."""
    m = len(g.type_counts)
    if m < 1:
        raise GameError("a game needs at least one player")
    if len(g.action_counts) != m:
        raise GameError(
            f"{m} type counts but {len(g.action_counts)} action counts"
        )
    if any(k < 1 for k in g.type_counts) or any(n < 1 for n in g.action_counts):
        raise GameError("every player needs at least one type and one action")
    if g.prior.shape != g.type_counts:
        raise GameError(f"prior has shape {g.prior.shape}, expected {g.type_counts}")
    if np.any(~np.isfinite(g.prior)) or np.any(g.prior < 0):
        raise GameError("prior has negative or non-finite entries")
    total = float(g.prior.sum())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise GameError(f"prior is not normalized: entries sum to {total!r}")
    if len(g.utilities) != m:
        raise GameError(f"expected {m} utility tables, got {len(g.utilities)}")
    expected = g.type_counts + g.action_counts
    for i, u in enumerate(g.utilities):
        if u.shape != expected:
            raise GameError(
                f"utility table of player {i} has shape {u.shape}, expected {expected}"
            )
        bad = ~np.isfinite(u) | (u < -UTILITY_TOL) | (u > 1 + UTILITY_TOL)
        if np.any(bad):
            idx = tuple(int(x) for x in np.argwhere(bad)[0])
            raise GameError(
                f"utility of player {i} at index {idx} is {u[idx]!r}, outside [0, 1]"
            )


class BehaviorStrategy:
    """One action distribution per type: a ``(K, n)`` row-stochastic array."""

    __slots__ = ("_probs",)

    def __init__(self, probs):
        probs = _readonly(probs)
        if probs.ndim != 2:
            raise DistributionError("behavior strategy must be a (types, actions) array")
        for row in probs:
            FiniteDist(row)
        self._probs = probs

    @classmethod
    def pure(cls, choices: Sequence[int], num_actions: int) -> BehaviorStrategy:
        probs = np.zeros((len(choices), num_actions))
        probs[np.arange(len(choices)), list(choices)] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, num_types: int, num_actions: int) -> BehaviorStrategy:
        return cls(np.full((num_types, num_actions), 1.0 / num_actions))

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def num_types(self) -> int:
        return self._probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self._probs.shape[1]

    @property
    def per_type(self) -> list[FiniteDist]:
        return [FiniteDist(row) for row in self._probs]

    def prob(self, s: Sequence[int]) -> float:
        return float(np.prod(self._probs[np.arange(self.num_types), list(s)]))

    def to_pure_dist(self) -> FiniteDist:
        return MixedStrategy.from_behavior(self).to_pure_dist()

    def __eq__(self, other) -> bool:
        if not isinstance(other, BehaviorStrategy):
            return NotImplemented
        return np.array_equal(self._probs, other._probs)

    def __repr__(self) -> str:
        return f"BehaviorStrategy({self._probs.tolist()!r})"


class MixedStrategy:
    """Weighted mixture of behavior strategies, i.e. an element of Delta(S_i).

    ``components`` has shape ``(C, K, n)``; ``weights`` has shape ``(C,)``.
    """

    __slots__ = ("_components", "_weights")

    def __init__(self, components, weights=None):
        comps = _readonly(components)
        if comps.ndim != 3:
            raise DistributionError("components must have shape (C, types, actions)")
        for comp in comps:
            for row in comp:
                FiniteDist(row)
        if weights is None:
            weights = np.full(comps.shape[0], 1.0 / comps.shape[0])
        self._weights = FiniteDist(weights).probs
        if self._weights.shape != (comps.shape[0],):
            raise DistributionError("one weight per component required")
        self._components = comps

    @classmethod
    def _trusted(cls, components, weights=None) -> MixedStrategy:
        # internal fast path for arrays produced by the learners themselves
        obj = cls.__new__(cls)
        comps = _readonly(components)
        obj._components = comps
        if weights is None:
            weights = np.full(comps.shape[0], 1.0 / comps.shape[0])
        obj._weights = _readonly(weights)
        return obj

    @classmethod
    def from_behavior(cls, x: BehaviorStrategy) -> MixedStrategy:
        return cls(x.probs[None])

    @classmethod
    def uniform_mixture(cls, behaviors: Sequence[BehaviorStrategy]) -> MixedStrategy:
        return cls(np.stack([b.probs for b in behaviors]))

    @classmethod
    def from_pure_dist(cls, dist: FiniteDist) -> MixedStrategy:
        """Convert a distribution over pure strategies (shape ``(n,)*K``)."""
        shape = dist.shape
        n = shape[0]
        if any(s != n for s in shape):
            raise DistributionError("pure-strategy domain must be (n,) * K")
        support = list(dist.support())
        comps = np.zeros((len(support), len(shape), n))
        weights = np.empty(len(support))
        for c, s in enumerate(support):
            comps[c, np.arange(len(shape)), list(s)] = 1.0
            weights[c] = dist.probs[s]
        return cls(comps, weights)

    @property
    def components(self) -> np.ndarray:
        return self._components

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def num_types(self) -> int:
        return self._components.shape[1]

    @property
    def num_actions(self) -> int:
        return self._components.shape[2]

    def type_marginals(self) -> np.ndarray:
        """Per-type action marginals, shape ``(K, n)``."""
        return np.einsum("c,ckn->kn", self._weights, self._components)

    def support_strategies(self) -> np.ndarray:
        """All pure strategies that can have positive mass, shape ``(S, K)``.

        This is the product of the per-type supports of the type marginals,
        a superset of the exact support.
        """
        marg = self.type_marginals()
        per_type = [np.flatnonzero(row > 0) for row in marg]
        grid = np.array(list(itertools.product(*per_type)), dtype=np.intp)
        return grid.reshape(-1, self.num_types)

    def component_probs(self, strategies: np.ndarray) -> np.ndarray:
        """Probability of each pure strategy under each component, ``(S, C)``."""
        strategies = np.asarray(strategies, dtype=np.intp)
        types = np.arange(self.num_types)
        # (C, S, K) -> product over types
        gathered = self._components[:, types[None, :], strategies]
        return gathered.prod(axis=2).T

    def probs_of(self, strategies: np.ndarray) -> np.ndarray:
        return self.component_probs(strategies) @ self._weights

    def prob(self, s: Sequence[int]) -> float:
        return float(self.probs_of(np.asarray([s]))[0])

    def to_pure_dist(self) -> FiniteDist:
        K, n = self.num_types, self.num_actions
        out = np.zeros((n,) * K)
        for c, w in enumerate(self._weights):
            joint = np.ones(())
            for row in self._components[c]:
                joint = np.multiply.outer(joint, row)
            out += w * joint
        return FiniteDist(out)

    def __repr__(self) -> str:
        return f"MixedStrategy(C={len(self._weights)}, K={self.num_types}, n={self.num_actions})"


Strategy = Union[BehaviorStrategy, MixedStrategy]


def as_mixed(x: Strategy) -> MixedStrategy:
    if isinstance(x, MixedStrategy):
        return x
    if isinstance(x, BehaviorStrategy):
        return MixedStrategy.from_behavior(x)
    if isinstance(x, FiniteDist):
        return MixedStrategy.from_pure_dist(x)
    raise TypeError(f"not a strategy: {type(x).__name__}")


def type_marginals(x: Strategy) -> np.ndarray:
    if isinstance(x, BehaviorStrategy):
        return x.probs
    return as_mixed(x).type_marginals()


@dataclass(frozen=True)
class ProfileMixture:
    """Weighted mixture of independent strategy profiles.

    ``components[c][i]`` is player ``i``'s strategy in component ``c``. A
    single component is a product distribution over ``S``.
    """

    components: tuple[tuple[MixedStrategy, ...], ...]
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(tuple(as_mixed(x) for x in comp) for comp in self.components)
        if not comps:
            raise DistributionError("a profile mixture needs at least one component")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", FiniteDist(self.weights).probs)
        if self.weights.shape != (len(comps),):
            raise DistributionError("one weight per component required")

    @classmethod
    def uniform(cls, components) -> ProfileMixture:
        components = tuple(components)
        return cls(components, np.full(len(components), 1.0 / len(components)))

    @classmethod
    def product(cls, profile: Sequence[Strategy]) -> ProfileMixture:
        return cls((tuple(profile),), np.ones(1))

    @property
    def rank(self) -> int:
        return len(self.components)

    @property
    def num_players(self) -> int:
        return len(self.components[0])

    def player_strategies(self, i: int) -> list[MixedStrategy]:
        return [comp[i] for comp in self.components]


def check_profile(g: BayesianGame, profile: Sequence[Strategy], skip: int | None = None) -> None:
    if len(profile) != g.num_players:
        raise GameError(f"profile has {len(profile)} players, game has {g.num_players}")
    for j, x in enumerate(profile):
        if j == skip or x is None:
            continue
        marg = type_marginals(x)
        expected = (g.type_counts[j], g.action_counts[j])
        if marg.shape != expected:
            raise GameError(
                f"strategy of player {j} has shape {marg.shape}, expected {expected}"
            )


def _expand(marg: np.ndarray, j: int, m: int) -> np.ndarray:
    """Reshape a ``(K_j, n_j)`` table to broadcast over ``types + actions``."""
    shape = [1] * (2 * m)
    shape[j] = marg.shape[0]
    shape[m + j] = marg.shape[1]
    return marg.reshape(shape)


def _prior_expanded(g: BayesianGame, prior: np.ndarray | None = None) -> np.ndarray:
    m = g.num_players
    p = g.prior if prior is None else prior
    return p.reshape(p.shape + (1,) * m)


def expected_utility(g: BayesianGame, profile: Sequence[Strategy]) -> np.ndarray:
    """Exact ``E_theta E_s [u_i(theta; s(theta))]`` for every player, by enumeration."""
    if isinstance(profile, ProfileMixture):
        return sum(
            w * expected_utility(g, comp)
            for w, comp in zip(profile.weights, profile.components)
        )
    check_profile(g, profile)
    m = g.num_players
    joint = _prior_expanded(g)
    for j, x in enumerate(profile):
        joint = joint * _expand(type_marginals(x), j, m)
    return np.array([float((joint * u).sum()) for u in g.utilities])


def reward_table(g: BayesianGame, i: int, opponents: Sequence[Strategy | None]) -> np.ndarray:
    """Conditional expected reward of every (type, action) of player ``i``.

    Entry ``[k, j]`` is ``E_{s_-i} E_{theta_-i | theta_i = k}[u_i(theta; j, s_-i)]``.
    Only per-type action marginals of opponents are needed, since a single
    opponent type is realized per play. Rows of zero-probability types are NaN.
    """
    check_profile(g, opponents, skip=i)
    m = g.num_players
    weight = _prior_expanded(g)
    for j, x in enumerate(opponents):
        if j != i:
            weight = weight * _expand(type_marginals(x), j, m)
    keep = (i, m + i)
    axes = tuple(a for a in range(2 * m) if a not in keep)
    totals = (weight * g.utilities[i]).sum(axis=axes)
    mass = g.type_marginal(i)
    out = np.full(totals.shape, np.nan)
    positive = mass > 0
    out[positive] = totals[positive] / mass[positive, None]
    # guard against rounding just outside the unit interval
    return np.clip(out, 0.0, 1.0)


def conditional_reward_vector(
    g: BayesianGame, i: int, k: int, opponents: Sequence[Strategy | None]
) -> np.ndarray:
    """Reward vector ``r_k(j)`` of player ``i`` at type ``k`` against ``opponents``."""
    if g.type_marginal(i)[k] <= 0:
        raise ZeroProbabilityTypeError(f"type {k} of player {i} has zero prior probability")
    return reward_table(g, i, opponents)[k]


def default_sample_count(epsilon: float, m: int, n: int, K: int, c: float = 8.0) -> int:
    """Samples per reward entry for +-epsilon accuracy w.h.p."""
    return max(1, math.ceil(c * math.log(m * n * K / epsilon) / epsilon**2))


def _sample_rows(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum((cdf_rows <= u[:, None]).sum(axis=1), cdf_rows.shape[1] - 1)


def sampled_reward_vector(
    g: BayesianGame,
    i: int,
    k: int,
    opponents: Sequence[Strategy | None],
    sample_count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Monte Carlo estimate of :func:`conditional_reward_vector`.

    Each sample draws ``theta_-i ~ (prior | theta_i = k)`` and one action per
    opponent from its strategy at that type; all actions of player ``i`` are
    scored against the same sample.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    check_profile(g, opponents, skip=i)
    cond = g.conditional_prior(i, k).ravel()
    cdf = np.cumsum(cond)
    cdf[-1] = 1.0
    flat = np.minimum(np.searchsorted(cdf, rng.random(sample_count), side="right"), cond.size - 1)
    thetas = np.unravel_index(flat, g.type_counts)
    index: list = list(thetas)
    for j, x in enumerate(opponents):
        if j == i:
            index.append(slice(None))
            continue
        marg_cdf = np.cumsum(type_marginals(x), axis=1)
        marg_cdf[:, -1] = 1.0
        index.append(_sample_rows(marg_cdf[thetas[j]], rng.random(sample_count)))
    values = g.utilities[i][tuple(index)]
    return values.mean(axis=0)


def pure_strategies(num_types: int, num_actions: int) -> np.ndarray:
    """All ``num_actions ** num_types`` pure strategies, row-major, shape ``(S, K)``."""
    grid = np.array(list(itertools.product(range(num_actions), repeat=num_types)), dtype=np.intp)
    return grid.reshape(-1, num_types)


def random_game(
    rng: np.random.Generator,
    type_counts: Sequence[int],
    action_counts: Sequence[int],
    independent_prior: bool = False,
) -> BayesianGame:
    """Game with uniform random utilities and a Dirichlet(1) prior."""
    type_counts = tuple(type_counts)
    if independent_prior:
        prior = np.ones(())
        for K in type_counts:
            prior = np.multiply.outer(prior, rng.dirichlet(np.ones(K)))
    else:
        prior = rng.dirichlet(np.ones(int(np.prod(type_counts)))).reshape(type_counts)
    shape = type_counts + tuple(action_counts)
    utilities = tuple(rng.random(shape) for _ in type_counts)
    return BayesianGame(type_counts, tuple(action_counts), prior, utilities)
