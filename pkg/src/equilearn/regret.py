"""Multiplicative weights and Vovk's aggregating algorithm.

States are immutable values; ``*_update`` returns a new state. All logs are
natural logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from equilearn.finite_dist import DistributionError, FiniteDist

REWARD_TOL = 1e-9


class RewardRangeError(ValueError):
    pass


class VovkError(ValueError):
    pass


def _readonly(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MwuState:
    """Hedge over ``n`` actions with rewards in ``[0, bound]``."""

    n: int
    eta: float
    bound: float = 1.0
    cumulative_rewards: np.ndarray = field(default=None)
    round: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not self.eta > 0:
            raise ValueError(f"learning rate must be positive, got {self.eta!r}")
        if not self.bound > 0:
            raise ValueError("reward bound must be positive")
        cum = np.zeros(self.n) if self.cumulative_rewards is None else self.cumulative_rewards
        cum = _readonly(cum)
        if cum.shape != (self.n,):
            raise ValueError(f"cumulative rewards must have shape ({self.n},)")
        object.__setattr__(self, "cumulative_rewards", cum)


def mwu_default_eta(n: int, T: int, B: float = 1.0) -> float:
    """Learning rate ``sqrt(ln(n) / T) / B``."""
    if n < 2 or T < 1 or not B > 0:
        raise ValueError("need n >= 2, T >= 1, B > 0")
    return math.sqrt(math.log(n) / T) / B


def _softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    w = np.exp(z - z.max(axis=axis, keepdims=True))
    return w / w.sum(axis=axis, keepdims=True)


def mwu_weights(state: MwuState) -> np.ndarray:
    return _softmax(state.eta * state.cumulative_rewards)


def mwu_distribution(state: MwuState) -> FiniteDist:
    """``p(i) ∝ exp(eta * cumulative_rewards(i))``, computed with a max shift."""
    return FiniteDist(mwu_weights(state))


def mwu_update(state: MwuState, reward) -> MwuState:
    reward = np.asarray(reward, dtype=np.float64)
    if reward.shape != (state.n,):
        raise RewardRangeError(f"reward has shape {reward.shape}, expected ({state.n},)")
    tol = REWARD_TOL * max(1.0, state.bound)
    if np.any(~np.isfinite(reward)) or reward.min() < -tol or reward.max() > state.bound + tol:
        raise RewardRangeError(
            f"reward entries must lie in [0, {state.bound}], got "
            f"[{reward.min()!r}, {reward.max()!r}]"
        )
    return MwuState(
        state.n,
        state.eta,
        state.bound,
        state.cumulative_rewards + reward,
        state.round + 1,
    )


def external_regret(rewards: np.ndarray, plays: np.ndarray) -> float:
    """``max_i sum_t r_t(i) - sum_t <p_t, r_t>`` for ``(T, n)`` arrays."""
    rewards = np.asarray(rewards, dtype=np.float64)
    plays = np.asarray(plays, dtype=np.float64)
    return float(rewards.sum(axis=0).max() - np.einsum("tn,tn->", plays, rewards))


def run_mwu(rewards: np.ndarray, eta: float | None = None, bound: float = 1.0) -> np.ndarray:
    """Play MWU against a fixed ``(T, n)`` reward sequence; returns the ``(T, n)`` plays.

    Row ``t`` is the softmax of ``eta`` times the rewards summed over rounds before ``t``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    T, n = rewards.shape
    tol = REWARD_TOL * max(1.0, bound)
    if np.any(~np.isfinite(rewards)) or rewards.min() < -tol or rewards.max() > bound + tol:
        raise RewardRangeError(f"reward entries must lie in [0, {bound}]")
    eta = mwu_default_eta(n, T, bound) if eta is None else eta
    seen = np.zeros((T, n))
    np.cumsum(rewards[:-1], axis=0, out=seen[1:])
    return _softmax(eta * seen, axis=1)


@dataclass(frozen=True)
class VovkState:
    """Cumulative log-loss of each expert; ``inf`` marks an eliminated expert."""

    expert_count: int
    cumulative_log_loss: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.expert_count < 1:
            raise ValueError("need at least one expert")
        loss = (
            np.zeros(self.expert_count)
            if self.cumulative_log_loss is None
            else self.cumulative_log_loss
        )
        loss = _readonly(loss)
        if loss.shape != (self.expert_count,):
            raise ValueError("one cumulative loss per expert required")
        object.__setattr__(self, "cumulative_log_loss", loss)


def vovk_posterior(state: VovkState) -> FiniteDist:
    """``q(i) ∝ exp(-cumulative_log_loss(i))``."""
    loss = state.cumulative_log_loss
    if np.all(np.isinf(loss)):
        raise VovkError("outcome impossible under every expert")
    return FiniteDist(_softmax(-loss))


def vovk_update(state: VovkState, likelihoods) -> VovkState:
    """Add ``log(1 / likelihood)`` per expert; zero likelihood eliminates the expert."""
    lik = np.asarray(likelihoods, dtype=np.float64)
    if lik.shape != (state.expert_count,):
        raise ValueError(f"expected {state.expert_count} likelihoods, got shape {lik.shape}")
    lo, hi = float(lik.min()), float(lik.max())
    if not (lo >= 0 and hi <= 1 + 1e-12):
        raise ValueError("likelihoods must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        loss = state.cumulative_log_loss - np.log(lik)
    if np.all(np.isinf(loss)):
        raise VovkError("outcome impossible under every expert")
    return VovkState(state.expert_count, loss)


def vovk_update_log(state: VovkState, log_likelihoods) -> VovkState:
    """Log-domain variant of :func:`vovk_update` (``-inf`` eliminates)."""
    ll = np.asarray(log_likelihoods, dtype=np.float64)
    if ll.shape != (state.expert_count,):
        raise ValueError(f"expected {state.expert_count} log-likelihoods")
    if np.any(ll > 1e-12) or np.any(np.isnan(ll)):
        raise ValueError("log-likelihoods must be <= 0")
    loss = state.cumulative_log_loss - ll
    if np.all(np.isinf(loss)):
        raise VovkError("outcome impossible under every expert")
    return VovkState(state.expert_count, loss)


def vovk_predict(state: VovkState, expert_predictions: Sequence[FiniteDist]) -> FiniteDist:
    """Posterior-weighted mixture of the experts' predictions."""
    if len(expert_predictions) != state.expert_count:
        raise ValueError("one prediction per expert required")
    shape = expert_predictions[0].shape
    if any(p.shape != shape for p in expert_predictions):
        raise DistributionError("prediction domains differ")
    q = vovk_posterior(state).probs
    stacked = np.array([p.probs for p in expert_predictions]).reshape(len(q), -1)
    return FiniteDist((q @ stacked).reshape(shape))
