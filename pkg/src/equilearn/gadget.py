"""Three-player Kibitzer gadget built on a two-player Bayesian game.

In each gadget the Kibitzer (player index 2) names a target player ``i``, a
type ``theta_i`` for it and a suggested action. Nature draws the other
player's type from the prior conditioned on ``theta_i``; both players act.
The target is paid its margin over the suggestion and the Kibitzer the
negation, so every outcome is zero-sum. The repeated game plays ``H``
gadgets in sequence, each weighted ``1/H``.

The game tree is never built. Strategies are oracles queried with the
history of earlier outcomes; every quantity is estimated along sampled
rollouts. Oracles see only the history: when the Kibitzer and the target act,
the other player's type has not been drawn yet.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from equilearn.bayes_game import (
    BayesianGame,
    MixedStrategy,
    ZeroProbabilityTypeError,
    reward_table,
)
from equilearn.equilibrium import EquilibriumReport, check_bne_product, fixed_deviation_gains
from equilearn.regret import (
    MwuState,
    VovkError,
    VovkState,
    mwu_default_eta,
    mwu_update,
    mwu_weights,
    vovk_posterior,
    vovk_update,
)

KIBITZER = 2


class GuaranteeWarning(RuntimeWarning):
    """``H`` is too small for the reduction's guarantees to apply."""


@dataclass(frozen=True)
class KibitzerAction:
    target: int
    type: int
    action: int


@dataclass(frozen=True)
class GadgetOutcome:
    actions: tuple[int, int]
    kibitzer: KibitzerAction
    types: tuple[int, int]


History = tuple[GadgetOutcome, ...]
PlayerOracle = Callable[[History], np.ndarray]
KibitzerOracle = Callable[[History], np.ndarray]


def _require_two_players(g: BayesianGame) -> None:
    if g.num_players != 2:
        raise ValueError("the gadget is defined for two-player Bayesian games")


def kibitzer_actions(g: BayesianGame) -> list[KibitzerAction]:
    """All Kibitzer actions in canonical order (target, type, action), row-major."""
    _require_two_players(g)
    return [
        KibitzerAction(i, k, a)
        for i in range(2)
        for k in range(g.type_counts[i])
        for a in range(g.action_counts[i])
    ]


def kibitzer_index(g: BayesianGame, a: KibitzerAction) -> int:
    offset = 0 if a.target == 0 else g.type_counts[0] * g.action_counts[0]
    return offset + a.type * g.action_counts[a.target] + a.action


def _kibitzer_block(g: BayesianGame, xk: np.ndarray, i: int) -> np.ndarray:
    """Slice of a Kibitzer distribution targeting player ``i``, shape ``(K_i, n_i)``."""
    size0 = g.type_counts[0] * g.action_counts[0]
    flat = xk[:size0] if i == 0 else xk[size0:]
    return flat.reshape(g.type_counts[i], g.action_counts[i])


def gadget_utility(g: BayesianGame, o: GadgetOutcome) -> tuple[float, float, float]:
    """Utilities of players 0, 1 and the Kibitzer for one gadget outcome."""
    i = o.kibitzer.target
    if o.types[i] != o.kibitzer.type:
        raise ValueError("outcome types disagree with the Kibitzer's chosen type")
    suggested = list(o.actions)
    suggested[i] = o.kibitzer.action
    table = g.utilities[i]
    margin = float(table[o.types + o.actions] - table[o.types + tuple(suggested)])
    out = [0.0, 0.0, -margin]
    out[i] = margin
    return out[0], out[1], out[2]


@dataclass(frozen=True)
class EfgProfile:
    """Strategy oracles for players 0, 1 and the Kibitzer.

    Player oracles return a ``(K_i, n_i)`` behavior strategy for the gadget
    reached by the given history; the Kibitzer oracle returns a distribution
    over :func:`kibitzer_actions`. ``stationary`` marks oracles that ignore
    the history, which lets callers cache per-component work.
    """

    players: tuple[PlayerOracle, PlayerOracle]
    kibitzer: KibitzerOracle
    stationary: bool = False

    @classmethod
    def constant(cls, x0, x1, xk) -> EfgProfile:
        x0, x1, xk = (np.array(x, dtype=np.float64) for x in (x0, x1, xk))
        for x in (x0, x1, xk):
            x.setflags(write=False)
            _check_rows(x)
        return cls((lambda h: x0, lambda h: x1), lambda h: xk, stationary=True)

    def player(self, i: int, history: History) -> np.ndarray:
        return self.players[i](history)


def _check_rows(x: np.ndarray) -> None:
    x2 = np.atleast_2d(x)
    if np.any(x2 < 0) or np.any(np.abs(x2.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("oracle output is not a probability distribution")


@dataclass(frozen=True)
class RankTCce:
    """Uniform mixture of ``T`` profiles of the repeated gadget game."""

    components: tuple[EfgProfile, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("rank must be at least 1")

    @property
    def rank(self) -> int:
        return len(self.components)

    @property
    def stationary(self) -> bool:
        return all(c.stationary for c in self.components)


def _draw(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(probs) - 1))


def _conditional_other_type(g: BayesianGame, i: int, theta_i: int) -> np.ndarray:
    row = np.take(g.prior, theta_i, axis=i)
    mass = row.sum()
    if mass <= 0:
        raise ZeroProbabilityTypeError(
            f"type {theta_i} of player {i} has zero prior probability"
        )
    return row / mass


def _sample_with(
    g: BayesianGame,
    kibitzer: np.ndarray | KibitzerAction,
    x0: np.ndarray,
    x1: np.ndarray,
    rng: np.random.Generator,
) -> GadgetOutcome:
    # one uniform per draw, in a fixed order: Kibitzer, target, nature, other
    u = rng.random(4)
    if isinstance(kibitzer, KibitzerAction):
        ak = kibitzer
    else:
        ak = kibitzer_actions(g)[_draw(kibitzer, u[0])]
    i = ak.target
    other = 1 - i
    xs = (x0, x1)
    types = [0, 0]
    actions = [0, 0]
    types[i] = ak.type
    actions[i] = _draw(xs[i][ak.type], u[1])
    types[other] = _draw(_conditional_other_type(g, i, ak.type), u[2])
    actions[other] = _draw(xs[other][types[other]], u[3])
    return GadgetOutcome((actions[0], actions[1]), ak, (types[0], types[1]))


def sample_gadget_outcome(
    g: BayesianGame, profile: EfgProfile, history: History, rng: np.random.Generator
) -> GadgetOutcome:
    """Play one gadget at ``history``.

    Draw order is fixed: Kibitzer action, target's action, the other type,
    the other player's action. The first two never depend on the other type.
    """
    _require_two_players(g)
    xk = profile.kibitzer(history)
    return _sample_with(g, xk, profile.player(0, history), profile.player(1, history), rng)


@dataclass(frozen=True)
class RolloutEstimate:
    """Monte Carlo estimate of the three players' utilities."""

    mean: np.ndarray
    stderr: np.ndarray
    samples: np.ndarray
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, samples: np.ndarray, **extras) -> RolloutEstimate:
        samples = np.asarray(samples, dtype=np.float64)
        n = samples.shape[0]
        std = samples.std(axis=0, ddof=1) if n > 1 else np.zeros(samples.shape[1])
        return cls(samples.mean(axis=0), std / math.sqrt(n), samples, extras)


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def rollout_utility(
    g: BayesianGame, H: int, profile: EfgProfile | RankTCce, num_rollouts: int, rng
) -> RolloutEstimate:
    """Estimate ``u_j(mu)`` by sampling full plays of the ``H``-fold game.

    For a :class:`RankTCce` each rollout first picks a component uniformly.
    """
    _require_two_players(g)
    if num_rollouts < 1 or H < 1:
        raise ValueError("need H >= 1 and num_rollouts >= 1")
    rng = _as_rng(rng)
    children = rng.spawn(num_rollouts)
    samples = np.zeros((num_rollouts, 3))
    for r, child in enumerate(children):
        if isinstance(profile, RankTCce):
            current = profile.components[int(child.integers(profile.rank))]
        else:
            current = profile
        history: History = ()
        for _ in range(H):
            o = sample_gadget_outcome(g, current, history, child)
            samples[r] += np.array(gadget_utility(g, o)) / H
            history += (o,)
    return RolloutEstimate.from_samples(samples)


def guarantee_horizon(T: int, eps: float) -> int:
    """Smallest ``H`` with ``H >= ln(T) / eps^2``."""
    return max(1, math.ceil(math.log(T) / eps**2)) if T > 1 else 1


def _warn_if_short(H: int, T: int, eps: float) -> None:
    if T > 1 and H < math.log(T) / eps**2:
        warnings.warn(
            f"H={H} is below ln(T)/eps^2 = {math.log(T) / eps**2:.2f}; "
            "the reduction's guarantees do not apply",
            GuaranteeWarning,
            stacklevel=3,
        )


class _Components:
    """Per-history evaluation of every component's oracles, cached for stationary mixtures."""

    def __init__(self, g: BayesianGame, mu: RankTCce):
        self.g = g
        self.mu = mu
        self._cache: dict = {}

    def _key(self, history: History):
        return None if self.mu.stationary else history

    def strategies(self, history: History) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked ``(T, K0, n0)``, ``(T, K1, n1)`` and ``(T, |A_K|)`` oracle outputs."""
        key = ("x", self._key(history))
        if key not in self._cache:
            comps = self.mu.components
            self._cache[key] = (
                np.stack([c.player(0, history) for c in comps]),
                np.stack([c.player(1, history) for c in comps]),
                np.stack([c.kibitzer(history) for c in comps]),
            )
        return self._cache[key]

    def reward_tables(self, history: History, i: int) -> np.ndarray:
        """``(T, K_i, n_i)`` conditional rewards of player ``i`` against each component."""
        key = ("r", i, self._key(history))
        if key not in self._cache:
            xs = self.strategies(history)
            other = 1 - i
            tables = []
            for x in xs[other]:
                profile = [None, None]
                profile[other] = MixedStrategy._trusted(x[None])
                tables.append(np.nan_to_num(reward_table(self.g, i, profile)))
            self._cache[key] = np.stack(tables)
        return self._cache[key]

    def player_outcome_tables(self, history: History, i: int) -> np.ndarray:
        """Distribution of the outcome seen by player ``i`` under each component.

        Shape ``(T, |A_K|, Kmax, n_other)``: Kibitzer action, type of the
        player the Kibitzer did not target, action of the other player.
        """
        key = ("oi", i, self._key(history))
        if key not in self._cache:
            g = self.g
            xs = self.strategies(history)
            other = 1 - i
            actions = kibitzer_actions(g)
            kmax = max(g.type_counts)
            T = self.mu.rank
            out = np.zeros((T, len(actions), kmax, g.action_counts[other]))
            for idx, ak in enumerate(actions):
                j = ak.target
                cond = _conditional_other_type(g, j, ak.type) if g.type_marginal(j)[ak.type] > 0 else None
                if cond is None:
                    continue
                for theta_free, p_theta in enumerate(cond):
                    if p_theta == 0:
                        continue
                    theta_other = ak.type if j == other else theta_free
                    out[:, idx, theta_free] = (
                        xs[2][:, idx, None] * p_theta * xs[other][:, theta_other]
                    )
            self._cache[key] = out
        return self._cache[key]

    def kibitzer_outcome_tables(self, history: History, ak: KibitzerAction) -> np.ndarray:
        """``(T, K_other, n0, n1)`` outcome distribution given the Kibitzer plays ``ak``."""
        key = ("ok", ak, self._key(history))
        if key not in self._cache:
            g = self.g
            x0, x1, _ = self.strategies(history)
            j = ak.target
            cond = _conditional_other_type(g, j, ak.type)
            T = self.mu.rank
            out = np.zeros((T, len(cond), g.action_counts[0], g.action_counts[1]))
            for theta_free, p_theta in enumerate(cond):
                types = [0, 0]
                types[j] = ak.type
                types[1 - j] = theta_free
                out[:, theta_free] = p_theta * (
                    x0[:, types[0], :, None] * x1[:, types[1], None, :]
                )
            self._cache[key] = out
        return self._cache[key]


def _player_observation_index(o: GadgetOutcome, g: BayesianGame, i: int) -> tuple[int, int, int]:
    other = 1 - i
    free = 1 - o.kibitzer.target
    return kibitzer_index(g, o.kibitzer), o.types[free], o.actions[other]


def _kibitzer_observation_index(o: GadgetOutcome) -> tuple[int, int, int]:
    free = 1 - o.kibitzer.target
    return o.types[free], o.actions[0], o.actions[1]


def best_response_at_gadget(
    g: BayesianGame, comps: _Components, history: History, i: int, q: np.ndarray
) -> np.ndarray:
    """Per-type best action of player ``i`` against the predicted outcome mixture.

    Only gadgets targeting ``i`` pay player ``i``, and they fix its type, so
    the argmax over pure strategies splits into one argmax per type.
    """
    rewards = comps.reward_tables(history, i)  # (T, K_i, n_i)
    _, _, xk = comps.strategies(history)
    weight = np.stack([_kibitzer_block(g, row, i).sum(axis=1) for row in xk])  # (T, K_i)
    score = np.einsum("t,tk,tkn->kn", q, weight, rewards)
    return score.argmax(axis=1)


def deviation_rollout_player(
    g: BayesianGame, H: int, mu: RankTCce, i: int, num_rollouts: int, rng
) -> RolloutEstimate:
    """Estimate ``u_i(x_i_dagger, mu_-i)`` for the online-learning deviation of player ``i``.

    Along each rollout the deviator keeps a Vovk posterior over components,
    fed with the likelihood of each observed outcome, and best-responds to the
    posterior prediction at every gadget. ``extras['mean_tv']`` estimates the
    average total variation between prediction and the true component.
    """
    _require_two_players(g)
    if i not in (0, 1):
        raise ValueError("deviating player must be 0 or 1")
    rng = _as_rng(rng)
    comps = _Components(g, mu)
    children = rng.spawn(num_rollouts)
    samples = np.zeros((num_rollouts, 3))
    tvs = np.zeros(num_rollouts)
    for r, child in enumerate(children):
        t_true = int(child.integers(mu.rank))
        vovk = VovkState(mu.rank)
        history: History = ()
        for _ in range(H):
            q = vovk_posterior(vovk).probs
            tables = comps.player_outcome_tables(history, i)
            predicted = np.tensordot(q, tables, axes=1)
            tvs[r] += 0.5 * np.abs(predicted - tables[t_true]).sum() / H
            choice = best_response_at_gadget(g, comps, history, i, q)
            dagger = np.zeros((g.type_counts[i], g.action_counts[i]))
            dagger[np.arange(g.type_counts[i]), choice] = 1.0
            x0, x1, xk = comps.strategies(history)
            xs = [x0[t_true], x1[t_true]]
            xs[i] = dagger
            o = _sample_with(g, xk[t_true], xs[0], xs[1], child)
            samples[r] += np.array(gadget_utility(g, o)) / H
            vovk = vovk_update(vovk, tables[(slice(None),) + _player_observation_index(o, g, i)])
            history += (o,)
    return RolloutEstimate.from_samples(samples, mean_tv=float(tvs.mean()))


def component_posterior(
    g: BayesianGame, mu: RankTCce, history: History, observer: int | str = "kibitzer"
) -> np.ndarray:
    """Posterior over components given a full history, recomputed from scratch.

    ``observer`` is ``"kibitzer"`` (likelihood of players' actions and nature
    given the Kibitzer's own actions) or a player index ``0``/``1``.
    """
    comps = _Components(g, mu)
    log_lik = np.zeros(mu.rank)
    for h, o in enumerate(history):
        prefix = history[:h]
        if observer == "kibitzer":
            lik = comps.kibitzer_outcome_tables(prefix, o.kibitzer)[
                (slice(None),) + _kibitzer_observation_index(o)
            ]
        else:
            lik = comps.player_outcome_tables(prefix, observer)[
                (slice(None),) + _player_observation_index(o, g, observer)
            ]
        with np.errstate(divide="ignore"):
            log_lik += np.log(lik)
    if np.all(np.isneginf(log_lik)):
        raise VovkError("outcome impossible under every expert")
    w = np.exp(log_lik - log_lik.max())
    return w / w.sum()


@dataclass(frozen=True)
class ReductionStep:
    depth: int
    posterior: np.ndarray
    report: EquilibriumReport
    action: KibitzerAction | None
    action_gain: float


@dataclass(frozen=True)
class ReductionResult:
    success: bool
    profile: tuple[MixedStrategy, MixedStrategy] | None
    worst_gain: float
    gadgets_visited: int
    steps: list[ReductionStep]

    def to_dict(self) -> dict:
        profile = None
        if self.profile is not None:
            profile = [x.type_marginals().tolist() for x in self.profile]
        return {
            "success": self.success,
            "worst_gain": None if math.isinf(self.worst_gain) else self.worst_gain,
            "gadgets_visited": self.gadgets_visited,
            "type_marginals": profile,
        }


def _kibitzer_candidate(
    g: BayesianGame, comps: _Components, history: History, q: np.ndarray, eps: float
):
    """Posterior-averaged strategies, their BNE report and the best Kibitzer action."""
    x0, x1, _ = comps.strategies(history)
    p = (MixedStrategy(x0, q), MixedStrategy(x1, q))
    report = check_bne_product(p, g, 16 * eps)
    best = None
    best_gain = -math.inf
    for i, (gains, actions) in enumerate(fixed_deviation_gains(g, p)):
        for k in range(g.type_counts[i]):
            if not np.isnan(gains[k]) and gains[k] > best_gain:
                best, best_gain = KibitzerAction(i, k, int(actions[k])), float(gains[k])
    return p, report, best, best_gain


def reduction_extract_bne(
    g: BayesianGame, H: int, mu: RankTCce, eps: float, budget: int, rng
) -> ReductionResult:
    """Search gadgets along the Kibitzer's deviation for an every-type-16eps BNE.

    At each visited gadget the Kibitzer's posterior over components gives
    per-player mixtures ``p_i``; if they form a 16eps-BNE they are returned.
    Otherwise the Kibitzer plays the action with the largest deviation gain
    and the rollout continues with play drawn from a uniformly chosen true
    component. After ``budget`` gadgets the best candidate is reported.
    """
    _require_two_players(g)
    _warn_if_short(H, mu.rank, eps)
    rng = _as_rng(rng)
    comps = _Components(g, mu)
    steps: list[ReductionStep] = []
    visited = 0
    best_profile, best_worst = None, math.inf
    while visited < budget:
        child = rng.spawn(1)[0]
        t_true = int(child.integers(mu.rank))
        vovk = VovkState(mu.rank)
        history: History = ()
        for depth in range(1, H + 1):
            if visited >= budget:
                break
            visited += 1
            q = vovk_posterior(vovk).probs
            p, report, action, gain = _kibitzer_candidate(g, comps, history, q, eps)
            if report.worst_gain < best_worst:
                best_profile, best_worst = p, report.worst_gain
            if report.satisfied:
                steps.append(ReductionStep(depth, q, report, None, 0.0))
                return ReductionResult(True, p, report.worst_gain, visited, steps)
            steps.append(ReductionStep(depth, q, report, action, gain))
            x0, x1, _ = comps.strategies(history)
            o = _sample_with(g, action, x0[t_true], x1[t_true], child)
            lik = comps.kibitzer_outcome_tables(history, action)[
                (slice(None),) + _kibitzer_observation_index(o)
            ]
            vovk = vovk_update(vovk, lik)
            history += (o,)
    return ReductionResult(False, best_profile, best_worst, visited, steps)


def kibitzer_deviation_utility(
    g: BayesianGame, H: int, mu: RankTCce, eps: float, num_rollouts: int, rng
) -> RolloutEstimate:
    """Estimate all utilities when the Kibitzer plays the reduction's deviation.

    At every gadget the Kibitzer plays its largest-gain action against the
    posterior-averaged strategies. ``extras['bne_gadgets']`` counts gadgets
    where those strategies already formed a 16eps-BNE (the deviation's
    guarantee presumes there are none).
    """
    _require_two_players(g)
    _warn_if_short(H, mu.rank, eps)
    rng = _as_rng(rng)
    comps = _Components(g, mu)
    children = rng.spawn(num_rollouts)
    samples = np.zeros((num_rollouts, 3))
    bne_hits = 0
    for r, child in enumerate(children):
        t_true = int(child.integers(mu.rank))
        vovk = VovkState(mu.rank)
        history: History = ()
        for _ in range(H):
            q = vovk_posterior(vovk).probs
            _, report, action, _ = _kibitzer_candidate(g, comps, history, q, eps)
            bne_hits += int(report.satisfied)
            x0, x1, _ = comps.strategies(history)
            o = _sample_with(g, action, x0[t_true], x1[t_true], child)
            samples[r] += np.array(gadget_utility(g, o)) / H
            lik = comps.kibitzer_outcome_tables(history, action)[
                (slice(None),) + _kibitzer_observation_index(o)
            ]
            vovk = vovk_update(vovk, lik)
            history += (o,)
    return RolloutEstimate.from_samples(samples, bne_gadgets=bne_hits)


def learn_gadget_cce(
    g: BayesianGame, T: int, eta_scale: float = 1.0
) -> tuple[RankTCce, np.ndarray]:
    """Rank-``T`` mixture from ``T`` rounds of stationary MWU self-play in one gadget.

    Players 0 and 1 run one MWU per type on their expected gadget payoffs;
    the Kibitzer runs MWU over its actions with zero-probability types
    excluded. Payoffs in ``[-1, 1]`` are shifted to ``[0, 1]``, which leaves
    MWU unchanged. Returns the mixture and each player's average external
    regret per round in the one-shot gadget.
    """
    _require_two_players(g)
    actions = kibitzer_actions(g)
    valid = np.array([g.type_marginal(a.target)[a.type] > 0 for a in actions])
    n_valid = int(valid.sum())

    def eta(n: int) -> float:
        return eta_scale * (mwu_default_eta(n, T) if n > 1 else 1.0)

    states = [
        [MwuState(g.action_counts[i], eta(g.action_counts[i])) for _ in range(g.type_counts[i])]
        for i in range(2)
    ]
    kib_state = MwuState(n_valid, eta(n_valid))
    components = []
    earned = np.zeros(3)
    best_fixed = [np.zeros((g.type_counts[i], g.action_counts[i])) for i in range(2)]
    kib_fixed = np.zeros(n_valid)
    for _ in range(T):
        xs = [np.stack([mwu_weights(s) for s in states[i]]) for i in range(2)]
        xk = np.zeros(len(actions))
        xk[valid] = mwu_weights(kib_state)
        components.append(EfgProfile.constant(xs[0], xs[1], xk))

        kib_payoff = np.zeros(len(actions))
        for i in range(2):
            profile = [MixedStrategy._trusted(xs[0][None]), MixedStrategy._trusted(xs[1][None])]
            table = np.nan_to_num(reward_table(g, i, profile))  # (K_i, n_i)
            current = (xs[i] * table).sum(axis=1)  # (K_i,)
            block = _kibitzer_block(g, xk, i)  # (K_i, n_i)
            suggested = (block * table).sum(axis=1)
            mass = block.sum(axis=1)
            # player i's payoff for playing action a at type k
            payoff = mass[:, None] * table - suggested[:, None]
            earned[i] += float((xs[i] * payoff).sum())
            best_fixed[i] += payoff
            offset = 0 if i == 0 else g.type_counts[0] * g.action_counts[0]
            kib_payoff[offset : offset + table.size] = (table - current[:, None]).ravel()
            for k in range(g.type_counts[i]):
                states[i][k] = mwu_update(states[i][k], (payoff[k] + 1.0) / 2.0)
        earned[2] += float(xk @ kib_payoff)
        kib_fixed += kib_payoff[valid]
        kib_state = mwu_update(kib_state, (kib_payoff[valid] + 1.0) / 2.0)

    regrets = np.array(
        [
            (best_fixed[0].max(axis=1).sum() - earned[0]) / T,
            (best_fixed[1].max(axis=1).sum() - earned[1]) / T,
            (kib_fixed.max() - earned[2]) / T,
        ]
    )
    return RankTCce(tuple(components)), regrets
