"""Multi-scale MWU dynamics for Bayesian games.

Every player runs ``L`` threads. Thread ``l`` holds one MWU instance per type,
restarts it every ``H**l`` days, keeps its strategy fixed for ``H**(l-1)``
days at a time and feeds MWU the rewards aggregated over that stretch. The
player publishes the uniform mixture of the threads' per-type product
strategies. Days are 1-indexed throughout the public API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from equilearn._parallel import pmap
from equilearn.bayes_game import (
    BayesianGame,
    MixedStrategy,
    ProfileMixture,
    ZeroProbabilityTypeError,
    reward_table,
    sampled_reward_vector,
)
from equilearn.regret import MwuState, mwu_default_eta, mwu_update, mwu_weights

SWAP_SUPPORT_CAP = 4096


class ScaleCapError(ValueError):
    """Brute-force enumeration would exceed the desk-scale cap."""


@dataclass(frozen=True)
class DynamicsParams:
    epsilon: float
    H: int
    L: int
    reward_mode: str = "exact"
    sample_count: int | None = None

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon!r}")
        if int(self.H) != self.H or self.H < 2:
            raise ValueError(f"H must be an integer >= 2, got {self.H!r}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be an integer >= 1, got {self.L!r}")
        object.__setattr__(self, "H", int(self.H))
        object.__setattr__(self, "L", int(self.L))
        if self.reward_mode not in ("exact", "sampled"):
            raise ValueError(f"unknown reward mode {self.reward_mode!r}")
        if self.reward_mode == "sampled" and (self.sample_count is None or self.sample_count < 1):
            raise ValueError("sampled mode needs sample_count >= 1")

    @classmethod
    def from_epsilon(
        cls, epsilon: float, n: int, reward_mode: str = "exact", sample_count: int | None = None
    ) -> DynamicsParams:
        """``H = ceil(ln(n) / eps^2)`` (at least 2) and ``L = ceil(1 / eps)``."""
        if not 0 < epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {epsilon!r}")
        H = max(2, math.ceil(math.log(n) / epsilon**2))
        L = math.ceil(1 / epsilon)
        return cls(epsilon, H, L, reward_mode, sample_count)

    @property
    def T(self) -> int:
        return self.H**self.L

    def guarantee_epsilon(self, n: int) -> float:
        """Smallest eps for which ``H >= ln(n)/eps^2`` and ``L >= 1/eps`` both hold."""
        return max(1.0 / self.L, math.sqrt(math.log(n) / self.H)) if n > 1 else 1.0 / self.L


def schedule_index(t: int, ell: int, H: int, T: int | None = None) -> tuple[int, int]:
    """Restart index ``beta`` and round ``h`` of thread ``ell`` on day ``t``."""
    if t < 1 or (T is not None and t > T):
        raise ValueError(f"day {t} out of range")
    if ell < 1:
        raise ValueError("threads are numbered from 1")
    block = H**ell
    beta = -(-t // block)
    h = -(-(t - (beta - 1) * block) // H ** (ell - 1))
    return beta, h


def thread_regret_bound(H: int, n: int, ell: int) -> float:
    """MWU guarantee for one restart of thread ``ell``: ``2 sqrt(H ln n) H^(l-1)``."""
    return 2.0 * math.sqrt(H * math.log(n)) * H ** (ell - 1)


class PlayerLearner:
    """One player's side of the dynamics.

    The learner only sees its own reward table each day; it never reads other
    players' state.
    """

    def __init__(self, num_types: int, num_actions: int, H: int, L: int):
        self.num_types = num_types
        self.num_actions = num_actions
        self.H = H
        self.L = L
        self.day = 1
        self._states = [self._fresh_states(ell) for ell in range(1, L + 1)]
        self._pending = np.zeros((L, num_types, num_actions))
        self._threads = np.empty((L, num_types, num_actions))
        for ell in range(1, L + 1):
            self._refresh(ell)

    def _eta(self, ell: int) -> float:
        bound = float(self.H ** (ell - 1))
        if self.num_actions < 2:
            return 1.0 / bound
        return mwu_default_eta(self.num_actions, self.H, bound)

    def _fresh_states(self, ell: int) -> list[MwuState]:
        bound = float(self.H ** (ell - 1))
        return [MwuState(self.num_actions, self._eta(ell), bound) for _ in range(self.num_types)]

    def _thread_distribution(self, state: MwuState) -> np.ndarray:
        return mwu_weights(state)

    def _refresh(self, ell: int) -> None:
        for k, state in enumerate(self._states[ell - 1]):
            self._threads[ell - 1, k] = self._thread_distribution(state)

    def thread_strategies(self) -> np.ndarray:
        """Current ``(L, K, n)`` per-thread behavior strategies (a copy)."""
        return self._threads.copy()

    def play(self) -> MixedStrategy:
        return MixedStrategy._trusted(self._threads.copy())

    def observe(self, rewards: np.ndarray) -> None:
        """Take today's ``(K, n)`` reward table and advance one day."""
        self._pending += rewards[None]
        t = self.day
        for ell in range(1, self.L + 1):
            span = self.H ** (ell - 1)
            if t % span:
                continue
            states = self._states[ell - 1]
            for k in range(self.num_types):
                states[k] = mwu_update(states[k], self._pending[ell - 1, k])
            self._pending[ell - 1] = 0.0
            if t % (span * self.H) == 0:
                self._states[ell - 1] = self._fresh_states(ell)
            self._refresh(ell)
        self.day += 1


LearnerFactory = Callable[[int, int, int, int], PlayerLearner]


@dataclass(frozen=True, eq=False)
class DynamicsTrace:
    """Per-day play and rewards of a dynamics run.

    ``strategies[i]`` has shape ``(T, L, K_i, n_i)``: the thread strategies
    player ``i`` used on each day. ``rewards[i]`` has shape ``(T, K_i, n_i)``.
    """

    params: DynamicsParams
    strategies: tuple[np.ndarray, ...]
    rewards: tuple[np.ndarray, ...]

    @property
    def T(self) -> int:
        return self.rewards[0].shape[0]

    @property
    def num_players(self) -> int:
        return len(self.rewards)

    def played(self, i: int, t: int) -> MixedStrategy:
        """Player ``i``'s published mixture on day ``t`` (1-indexed)."""
        return MixedStrategy._trusted(self.strategies[i][t - 1])


def _day_rng(seed: int, player: int, day: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(player, day)))


def run_dynamics(
    g: BayesianGame,
    params: DynamicsParams,
    seed: int = 0,
    learner_factory: LearnerFactory = PlayerLearner,
) -> DynamicsTrace:
    """Run all players' learners uncoupled for ``T = H**L`` days."""
    m = g.num_players
    for i in range(m):
        zero = np.flatnonzero(g.type_marginal(i) <= 0)
        if zero.size:
            raise ZeroProbabilityTypeError(
                f"type {int(zero[0])} of player {i} has zero prior probability"
            )
    learners = [
        learner_factory(g.type_counts[i], g.action_counts[i], params.H, params.L)
        for i in range(m)
    ]
    T = params.T
    strategies = [np.empty((T, params.L, g.type_counts[i], g.action_counts[i])) for i in range(m)]
    rewards = [np.empty((T, g.type_counts[i], g.action_counts[i])) for i in range(m)]

    for t in range(1, T + 1):
        plays = [learner.play() for learner in learners]
        for i in range(m):
            strategies[i][t - 1] = plays[i].components

        def rewards_for(i: int) -> np.ndarray:
            if params.reward_mode == "exact":
                return reward_table(g, i, plays)
            rng = _day_rng(seed, i, t)
            return np.stack(
                [
                    sampled_reward_vector(g, i, k, plays, params.sample_count, rng)
                    for k in range(g.type_counts[i])
                ]
            )

        for i, r in enumerate(pmap(rewards_for, range(m))):
            rewards[i][t - 1] = r
            learners[i].observe(r)

    for arr in strategies + rewards:
        arr.setflags(write=False)
    return DynamicsTrace(params, tuple(strategies), tuple(rewards))


def empirical_distribution(trace: DynamicsTrace) -> ProfileMixture:
    """``mu = (1/T) sum_t prod_i p_t^(i)``, kept factored per day."""
    days = [
        tuple(MixedStrategy._trusted(trace.strategies[i][t]) for i in range(trace.num_players))
        for t in range(trace.T)
    ]
    return ProfileMixture.uniform(days)


def thread_external_regret(trace: DynamicsTrace, i: int, ell: int, beta: int, k: int) -> float:
    """External regret of ``MWU_{ell,k}`` of player ``i`` over restart ``beta``."""
    H, L = trace.params.H, trace.params.L
    if not 1 <= ell <= L:
        raise ValueError(f"thread {ell} out of range 1..{L}")
    block = H**ell
    if not 1 <= beta <= trace.T // block:
        raise ValueError(f"restart {beta} out of range for thread {ell}")
    days = slice((beta - 1) * block, beta * block)
    r = trace.rewards[i][days, k]
    w = trace.strategies[i][days, ell - 1, k]
    return float(r.sum(axis=0).max() - np.einsum("tn,tn->", w, r))


def _support_per_type(trace: DynamicsTrace, i: int) -> list[np.ndarray]:
    strat = trace.strategies[i]
    return [np.flatnonzero(strat[:, :, kk].max(axis=(0, 1)) > 0) for kk in range(strat.shape[2])]


def _chunked_strategies(per_type: list[np.ndarray], chunk: int):
    sizes = [len(s) for s in per_type]
    total = int(np.prod(sizes))
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        idx = np.unravel_index(flat, sizes)
        yield np.stack([per_type[kk][idx[kk]] for kk in range(len(per_type))], axis=1)


def per_type_swap_regret(
    trace: DynamicsTrace, i: int, k: int, cap: int = SWAP_SUPPORT_CAP
) -> float:
    """``max_phi sum_t sum_s p_t(s) [r_{t,k}(phi(s)(k)) - r_{t,k}(s(k))]``.

    The maximum decouples per source strategy ``s``: ``phi(s)(k)`` is the
    argmax of ``sum_t p_t(s) r_{t,k}``. Source strategies are enumerated over
    the support of the played mixtures, which must not exceed ``cap``.
    """
    per_type = _support_per_type(trace, i)
    size = int(np.prod([len(s) for s in per_type]))
    if size > cap:
        raise ScaleCapError(
            f"player {i} has {size} pure strategies in support, above the cap of {cap}"
        )
    strat = trace.strategies[i]
    r = trace.rewards[i][:, k]
    T, L, K, _ = strat.shape
    types = np.arange(K)
    chunk = max(1, (1 << 22) // max(1, T * L * K))
    gain = 0.0
    for block in _chunked_strategies(per_type, chunk):
        # (T, L, S, K) -> prob of each source strategy per day, averaged over threads
        p = strat[:, :, types[None, :], block].prod(axis=3).mean(axis=1)
        gain += float((p.T @ r).max(axis=1).sum())
    marg = strat[:, :, k].mean(axis=1)
    return gain - float(np.einsum("tn,tn->", marg, r))


def swap_regret_chain_bound(trace: DynamicsTrace, i: int, k: int) -> float:
    """``(1/L) sum_t max_j r_{t,k}(j) + sum over threads/restarts of the MWU bound / L``."""
    H, L = trace.params.H, trace.params.L
    n = trace.rewards[i].shape[2]
    r = trace.rewards[i][:, k]
    mwu_total = 0.0
    if n > 1:
        mwu_total = sum(
            (trace.T // H**ell) * thread_regret_bound(H, n, ell) for ell in range(1, L + 1)
        )
    return float(r.max(axis=1).sum()) / L + mwu_total / L
