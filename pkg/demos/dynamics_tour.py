"""Run multi-scale MWU on a random Bayesian game and inspect what it learned.

    python demos/dynamics_tour.py
"""

import numpy as np

from equilearn import (
    DynamicsParams,
    check_every_type_nfce,
    empirical_distribution,
    per_type_swap_regret,
    random_game,
    run_dynamics,
    swap_regret_chain_bound,
)

rng = np.random.default_rng(0)
game = random_game(rng, (2, 2), (3, 3))
params = DynamicsParams.from_epsilon(0.4, n=3)
print(f"H={params.H}  L={params.L}  T={params.T} days")

trace = run_dynamics(game, params, seed=1)

# each (player, type) pair keeps its swap regret well under the chained bound
for i in range(2):
    for k in range(2):
        reg = per_type_swap_regret(trace, i, k)
        bound = swap_regret_chain_bound(trace, i, k)
        print(f"player {i} type {k}: swap regret/T = {reg / trace.T:.4f}  (bound/T {bound / trace.T:.4f})")

# the uniform mixture over days is then an approximate every-type correlated equilibrium
mu = empirical_distribution(trace)
report = check_every_type_nfce(mu, game, 3 * params.epsilon)
print(f"worst per-type swap gain {report.worst_gain:.4f}, satisfied at 3*eps: {report.satisfied}")
