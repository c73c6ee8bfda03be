"""Uncoupled learning dynamics and equilibrium checks for finite Bayesian games."""

from equilearn.bayes_game import (
    BayesianGame,
    BehaviorStrategy,
    MixedStrategy,
    ProfileMixture,
    expected_utility,
    random_game,
    reward_table,
)
from equilearn.equilibrium import (
    EquilibriumReport,
    check_bne_product,
    check_every_type_nfce,
    check_ex_ante_nfce,
    counterexample_demo,
)
from equilearn.finite_dist import FiniteDist, ProductDist, tv_distance
from equilearn.gadget import (
    EfgProfile,
    RankTCce,
    learn_gadget_cce,
    reduction_extract_bne,
    rollout_utility,
)
from equilearn.multiscale import (
    DynamicsParams,
    empirical_distribution,
    per_type_swap_regret,
    run_dynamics,
    swap_regret_chain_bound,
    thread_external_regret,
)

__all__ = [
    "BayesianGame",
    "BehaviorStrategy",
    "DynamicsParams",
    "EfgProfile",
    "EquilibriumReport",
    "FiniteDist",
    "MixedStrategy",
    "ProductDist",
    "ProfileMixture",
    "RankTCce",
    "check_bne_product",
    "check_every_type_nfce",
    "check_ex_ante_nfce",
    "counterexample_demo",
    "empirical_distribution",
    "expected_utility",
    "learn_gadget_cce",
    "per_type_swap_regret",
    "random_game",
    "reduction_extract_bne",
    "reward_table",
    "rollout_utility",
    "run_dynamics",
    "swap_regret_chain_bound",
    "thread_external_regret",
    "tv_distance",
]
