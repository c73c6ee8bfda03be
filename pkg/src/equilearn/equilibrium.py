"""Verifiers for correlated and Bayes-Nash equilibria of Bayesian games.

The swap gain of player ``i`` at type ``k`` under a mixture of independent
profiles decouples per source strategy: ``phi(s)(k)`` is the best response to
the posterior-weighted reward vector given that ``s`` was recommended. Source
strategies are enumerated over the support of player ``i``'s mixtures, so
rank-T mixtures of pure strategies stay cheap even with many types.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.stats import binom

from equilearn._parallel import pmap
from equilearn.bayes_game import (
    BayesianGame,
    MixedStrategy,
    ProfileMixture,
    Strategy,
    ZeroProbabilityTypeError,
    as_mixed,
    reward_table,
    type_marginals,
)
from equilearn.multiscale import SWAP_SUPPORT_CAP, ScaleCapError

GAIN_TOL = 1e-9


@dataclass(frozen=True)
class Witness:
    player: int
    type: int | str
    deviation: Any

    def to_dict(self) -> dict:
        return {"player": self.player, "type": self.type, "deviation": self.deviation}


@dataclass(frozen=True)
class EquilibriumReport:
    satisfied: bool
    worst_gain: float
    epsilon: float
    witness: Witness | None = None
    gains: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "satisfied": self.satisfied,
            "worst_gain": self.worst_gain,
            "epsilon": self.epsilon,
            "witness": None if self.witness is None else self.witness.to_dict(),
            "gains": {f"{i}:{k}": v for (i, k), v in sorted(self.gains.items(), key=str)},
        }


def _source_strategies(strategies: Sequence[MixedStrategy], cap: int) -> np.ndarray:
    """Pure strategies of player ``i`` that can be recommended with positive mass.

    Uses the product of per-type supports when that fits under ``cap``;
    otherwise the union of each behavior sub-component's product support,
    which stays small for mixtures of (near) pure strategies.
    """
    num_types = strategies[0].num_types
    union = np.zeros(strategies[0].components.shape[1:], dtype=bool)
    for x in strategies:
        union |= (x.components > 0).any(axis=0)
    per_type = [np.flatnonzero(row) for row in union]
    if math.prod(len(s) for s in per_type) <= cap:
        grid = np.stack(np.meshgrid(*per_type, indexing="ij"), axis=-1)
        return grid.reshape(-1, num_types)
    seen: set[tuple[int, ...]] = set()
    for x in strategies:
        for comp in x.components:
            sub = [np.flatnonzero(row > 0) for row in comp]
            if math.prod(len(s) for s in sub) > cap:
                raise ScaleCapError(
                    f"support enumeration needs more than {cap} pure strategies"
                )
            for s in itertools.product(*sub):
                seen.add(tuple(int(a) for a in s))
            if len(seen) > cap:
                raise ScaleCapError(
                    f"more than {cap} pure strategies in support"
                )
    return np.array(sorted(seen), dtype=np.intp).reshape(-1, num_types)


def _check_type(g: BayesianGame, i: int, k: int) -> None:
    if not 0 <= k < g.type_counts[i]:
        raise ValueError(f"type {k} out of range for player {i}")
    if g.type_marginal(i)[k] <= 0:
        raise ZeroProbabilityTypeError(f"type {k} of player {i} has zero prior probability")


def _swap_gains_for_player(
    mu: ProfileMixture, g: BayesianGame, i: int, types: Sequence[int], cap: int
) -> dict[int, tuple[float, dict]]:
    strategies = mu.player_strategies(i)
    tables = np.stack([reward_table(g, i, comp) for comp in mu.components])  # (C, K, n)
    support = _source_strategies(strategies, cap)
    # (S, C): joint mass of (recommended s, component c)
    mass = np.stack([x.probs_of(support) for x in strategies], axis=1) * mu.weights[None]
    out = {}
    for k in types:
        r = tables[:, k]
        pooled = mass @ r  # (S, n)
        best = pooled.argmax(axis=1)
        current = pooled[np.arange(len(support)), support[:, k]]
        gain = float(pooled.max(axis=1).sum() - current.sum())
        phi = {
            tuple(int(a) for a in s): int(b)
            for s, b, row_mass in zip(support, best, mass.sum(axis=1))
            if row_mass > 0 and b != s[k]
        }
        out[k] = (max(gain, 0.0), phi)
    return out


def best_swap_gain(
    mu: ProfileMixture, g: BayesianGame, i: int, k: int, cap: int = SWAP_SUPPORT_CAP
) -> tuple[float, dict]:
    """Largest type-``k`` gain of player ``i`` over all swap functions.

    Returns ``(gain, phi)`` where ``phi`` maps each supported source strategy
    whose type-``k`` action changes to its new action (ties go to the lowest
    action index).
    """
    _check_type(g, i, k)
    return _swap_gains_for_player(mu, g, i, [k], cap)[k]


def _positive_types(g: BayesianGame, i: int) -> list[int]:
    return [int(k) for k in np.flatnonzero(g.type_marginal(i) > 0)]


def _all_swap_gains(mu: ProfileMixture, g: BayesianGame, cap: int):
    players = range(g.num_players)
    results = pmap(lambda i: _swap_gains_for_player(mu, g, i, _positive_types(g, i), cap), players)
    return dict(zip(players, results))


def _phi_for_json(phi: dict, limit: int = 64) -> list:
    return [[list(s), a] for s, a in list(phi.items())[:limit]]


def check_every_type_nfce(
    mu: ProfileMixture, g: BayesianGame, eps: float, cap: int = SWAP_SUPPORT_CAP
) -> EquilibriumReport:
    per_player = _all_swap_gains(mu, g, cap)
    gains = {(i, k): v[0] for i, d in per_player.items() for k, v in d.items()}
    (wi, wk), worst = max(gains.items(), key=lambda kv: kv[1])
    ok = worst <= eps + GAIN_TOL
    witness = None if ok else Witness(wi, wk, {"swap": _phi_for_json(per_player[wi][wk][1])})
    return EquilibriumReport(ok, worst, eps, witness, gains)


def check_ex_ante_nfce(
    mu: ProfileMixture, g: BayesianGame, eps: float, cap: int = SWAP_SUPPORT_CAP
) -> EquilibriumReport:
    """Prior-averaged swap gain; type components of ``phi`` are chosen independently."""
    per_player = _all_swap_gains(mu, g, cap)
    gains = {}
    for i, d in per_player.items():
        marg = g.type_marginal(i)
        gains[(i, "ex-ante")] = float(sum(marg[k] * v[0] for k, v in d.items()))
    (wi, _), worst = max(gains.items(), key=lambda kv: kv[1])
    ok = worst <= eps + GAIN_TOL
    witness = None
    if not ok:
        dev = {str(k): _phi_for_json(v[1]) for k, v in per_player[wi].items()}
        witness = Witness(wi, "ex-ante", {"swap": dev})
    return EquilibriumReport(ok, worst, eps, witness, gains)


def fixed_deviation_gains(
    g: BayesianGame, profile: Sequence[Strategy]
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per player: best fixed per-type deviation gain ``(K,)`` and its action ``(K,)``.

    Zero-probability types get a NaN gain and action -1.
    """
    out = []
    for i in range(g.num_players):
        table = reward_table(g, i, profile)
        marg = type_marginals(profile[i])
        valid = ~np.isnan(table[:, 0])
        gains = np.full(table.shape[0], np.nan)
        best = np.full(table.shape[0], -1)
        t = table[valid]
        best[valid] = t.argmax(axis=1)
        gains[valid] = np.maximum(t.max(axis=1) - (marg[valid] * t).sum(axis=1), 0.0)
        out.append((gains, best))
    return out


def check_bne_product(
    profile: Sequence[Strategy], g: BayesianGame, eps: float, mode: str = "every-type"
) -> EquilibriumReport:
    """Equilibrium check for a product profile.

    For a product distribution the best swap function collapses to the best
    fixed action per type, so no enumeration of pure strategies is needed.
    """
    if mode not in ("every-type", "ex-ante"):
        raise ValueError(f"unknown mode {mode!r}")
    profile = [as_mixed(x) for x in profile]
    per_player = fixed_deviation_gains(g, profile)
    gains = {}
    witnesses = {}
    for i, (gk, best) in enumerate(per_player):
        if mode == "every-type":
            for k in _positive_types(g, i):
                gains[(i, k)] = float(gk[k])
                witnesses[(i, k)] = Witness(i, k, {"action": int(best[k])})
        else:
            marg = g.type_marginal(i)
            pos = marg > 0
            gains[(i, "ex-ante")] = float((marg[pos] * gk[pos]).sum())
            witnesses[(i, "ex-ante")] = Witness(
                i, "ex-ante", {"actions": [int(a) for a in best]}
            )
    key, worst = max(gains.items(), key=lambda kv: kv[1])
    ok = worst <= eps + GAIN_TOL
    return EquilibriumReport(ok, worst, eps, None if ok else witnesses[key], gains)


# Counterexample: behaviorizing a rank-2 correlated equilibrium.

COUNTEREXAMPLE_UTILITY = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, -2.0], [-2.0, 1.0]])


@dataclass(frozen=True)
class CounterexampleResult:
    ce_gain: float
    behaviorized_gain: float
    optimal_behaviorized_gain: float
    mass_outside_windows: float


def counterexample_game(n: int) -> BayesianGame:
    """Player 0: ``n`` uniform types, 4 actions. Player 1: 1 type, 2 actions, utility 0.

    Player 0's payoffs are rescaled to ``(u + 2) / 3`` so that they lie in
    ``[0, 1]``; every gain is therefore one third of the raw gain.
    """
    prior = np.full((n, 1), 1.0 / n)
    u0 = np.broadcast_to((COUNTEREXAMPLE_UTILITY + 2.0) / 3.0, (n, 1, 4, 2))
    u1 = np.zeros((n, 1, 4, 2))
    return BayesianGame((n, 1), (4, 2), prior, (u0, u1))


def counterexample_mixture(n: int, behaviorized: bool = False) -> ProfileMixture:
    """The rank-2 correlated equilibrium, or its per-type behaviorization.

    Component 1: player 0 plays all-1 w.p. 2/3 (all-0 otherwise), player 1 plays 0.
    Component 2: player 0 plays all-1 w.p. 1/3, player 1 plays 1.
    """
    comps = []
    for p_one, p1_action in ((2 / 3, 0), (1 / 3, 1)):
        if behaviorized:
            row = np.array([1 - p_one, p_one, 0.0, 0.0])
            x0 = MixedStrategy(np.broadcast_to(row, (1, n, 4)).copy())
        else:
            all0 = np.zeros((n, 4))
            all0[:, 0] = 1.0
            all1 = np.zeros((n, 4))
            all1[:, 1] = 1.0
            x0 = MixedStrategy(np.stack([all0, all1]), [1 - p_one, p_one])
        x1 = np.zeros((1, 1, 2))
        x1[0, 0, p1_action] = 1.0
        comps.append((x0, MixedStrategy(x1)))
    return ProfileMixture.uniform(comps)


def _window_phi_action(w: int, n: int) -> int | None:
    """Target action of the window swap function for a strategy with ``w`` ones.

    ``None`` means the strategy is left unchanged. Overlapping windows go to
    the nearer centre; exact ties stay unchanged.
    """
    radius = math.sqrt(n) * math.log(n)
    in_low = abs(w - n / 3) < radius
    in_high = abs(w - 2 * n / 3) < radius
    if in_low and in_high:
        d_low, d_high = abs(3 * w - n), abs(3 * w - 2 * n)
        if d_low == d_high:
            return None
        return 3 if d_low < d_high else 2
    if in_high:
        return 2
    if in_low:
        return 3
    return None


def counterexample_demo(n: int) -> CounterexampleResult:
    """Exact swap gains for the rank-2 CE and its behaviorization, in raw payoff units.

    Strategies in the support only use actions 0 and 1, so they are indexed by
    their number of ones ``w``; both components are then binomial in ``w``.
    """
    if n < 4:
        raise ValueError("n must be at least 4")
    w = np.arange(n + 1)
    # mass of (w, component); component 1 has player 1 on 0, component 2 on 1
    m1 = 0.5 * binom.pmf(w, n, 2 / 3)
    m2 = 0.5 * binom.pmf(w, n, 1 / 3)
    to2 = m1 * COUNTEREXAMPLE_UTILITY[2, 0] + m2 * COUNTEREXAMPLE_UTILITY[2, 1]
    to3 = m1 * COUNTEREXAMPLE_UTILITY[3, 0] + m2 * COUNTEREXAMPLE_UTILITY[3, 1]

    radius = math.sqrt(n) * math.log(n)
    outside = (np.abs(w - n / 3) >= radius) & (np.abs(w - 2 * n / 3) >= radius)
    actions = [_window_phi_action(int(x), n) for x in w]
    phi_gain = sum(to2[x] if a == 2 else to3[x] for x, a in enumerate(actions) if a is not None)
    optimal = float(np.maximum(0.0, np.maximum(to2, to3)).sum())

    # the correlated version only recommends all-0 (w = 0) or all-1 (w = n)
    c1 = 0.5 * np.array([1 / 3, 2 / 3])
    c2 = 0.5 * np.array([2 / 3, 1 / 3])
    ce_to2 = c1 * COUNTEREXAMPLE_UTILITY[2, 0] + c2 * COUNTEREXAMPLE_UTILITY[2, 1]
    ce_to3 = c1 * COUNTEREXAMPLE_UTILITY[3, 0] + c2 * COUNTEREXAMPLE_UTILITY[3, 1]
    ce_gain = float(np.maximum(0.0, np.maximum(ce_to2, ce_to3)).sum())
    return CounterexampleResult(
        ce_gain, float(phi_gain), optimal, float((m1 + m2)[outside].sum())
    )
