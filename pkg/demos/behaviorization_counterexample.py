"""Why averaging a correlated equilibrium type by type can destroy it.

Player 0 has n types and a rank-2 correlated equilibrium in which every type
plays the same bit. Replacing the correlated mixture by independent per-type
coins keeps each type's marginal but leaks the hidden component through the
number of ones, which a swap deviation exploits.

    python demos/behaviorization_counterexample.py
"""

from equilearn import counterexample_demo

print(f"{'n':>5} {'ce gain':>10} {'window gain':>12} {'optimal gain':>13}")
for n in (6, 20, 50, 100, 200):
    r = counterexample_demo(n)
    print(f"{n:>5} {r.ce_gain:>10.4f} {r.behaviorized_gain:>12.4f} {r.optimal_behaviorized_gain:>13.4f}")
