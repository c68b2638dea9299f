import numpy as np

from twcrl.core import TabularMDP
from twcrl.traps import brute_force_trap_set, compute_trap_set, random_mdp

spacer = "_" * 60

# five states in a row, goal at the right end.
# action 0 steps right, action 1 steps left; state 1 leaks into a pit (state 0)
P = np.zeros((5, 2, 5))
P[0, :, 0] = 1.0            # the pit keeps you
P[1, 0, 2] = 0.7
P[1, 0, 0] = 0.3            # slippery step
P[1, 1, 0] = 1.0
P[2, 0, 3] = 1.0
P[2, 1, 1] = 1.0
P[3, 0, 4] = 1.0
P[3, 1, 2] = 1.0
P[4, :, 4] = 1.0            # goal is absorbing
mdp = TabularMDP(P, frozenset({4}))

report = compute_trap_set(mdp)
print("\nTrap states are the ones from which the goal can never be reached.")
print("trap set:", sorted(report.trap_states), " removal sweeps:", report.iterations)
print("state 1 is risky but not a trap: some action sequence still gets home.")

print(spacer)

# now cut the bridge: from state 2 every action falls back
P2 = P.copy()
P2[2] = 0.0
P2[2, :, 1] = 1.0
cut = TabularMDP(P2, frozenset({4}))
print("\nWith the bridge at state 2 removed:")
print("trap set:", sorted(compute_trap_set(cut).trap_states))

print(spacer)

print("\nThe fixed point agrees with a plain reachability search:")
rng = np.random.default_rng(0)
agree = 0
for _ in range(100):
    m = random_mdp(rng, n_states=int(rng.integers(2, 9)), n_actions=int(rng.integers(1, 4)))
    agree += compute_trap_set(m).trap_states == brute_force_trap_set(m).trap_states
print(f"  {agree}/100 random MDPs")
