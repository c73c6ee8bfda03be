"""Learn a rank-T mixture in the Kibitzer gadget and search it for a Bayes-Nash equilibrium.

    python demos/reduction_walkthrough.py
"""

import numpy as np

from equilearn import random_game
from equilearn.gadget import (
    guarantee_horizon,
    kibitzer_deviation_utility,
    learn_gadget_cce,
    reduction_extract_bne,
    rollout_utility,
)

game = random_game(np.random.default_rng(3), (2, 2), (2, 2))
T, eps = 16, 0.5
mu, regrets = learn_gadget_cce(game, T)
H = guarantee_horizon(T, eps)
print(f"rank {mu.rank}, H={H}, per-round one-shot regrets {np.round(regrets, 4)}")

base = rollout_utility(game, H, mu, 200, np.random.default_rng(0))
print(f"utilities under mu (players 0, 1, Kibitzer): {np.round(base.mean, 4)} +- {np.round(base.stderr, 4)}")

result = reduction_extract_bne(game, H, mu, eps, budget=200, rng=np.random.default_rng(1))
print(f"reduction success={result.success} after {result.gadgets_visited} gadgets, worst gain {result.worst_gain:.4f}")
if result.success:
    for i, x in enumerate(result.profile):
        print(f"  player {i} per-type strategy:\n{np.round(x.type_marginals(), 4)}")

dev = kibitzer_deviation_utility(game, H, mu, eps, 100, np.random.default_rng(2))
print(f"Kibitzer deviation value {dev.mean[2]:.4f} +- {dev.stderr[2]:.4f}")
