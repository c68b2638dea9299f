"""Trap-state analysis for finite MDPs.

A trap set is the largest set of non-goal states that no action can leave
with positive probability. It is computed as a greatest fixed point and
checked against a plain reachability search.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import TabularMDP
from .errors import OutOfRange


class TrapMethod(str, enum.Enum):
    FIXED_POINT = "fixed_point"
    BRUTE_FORCE = "brute_force"


@dataclass(frozen=True)
class TrapReport:
    trap_states: frozenset
    iterations: int
    method: TrapMethod


def _support(mdp: TabularMDP) -> np.ndarray:
    """Boolean (S, A, S) mask of positive-probability transitions."""
    return mdp.transitions > 0


def compute_trap_set(mdp: TabularMDP) -> TrapReport:
    """Remove states that can leak out of the candidate set until none can.

    Starts from all non-goal states. A work-list over reverse support edges
    revisits only predecessors of removed states. ``iterations`` counts the
    removal waves (sweeps) needed to reach the fixed point.
    """
    mdp.require_goals()
    support = _support(mdp)
    n = mdp.n_states
    preds = [set() for _ in range(n)]
    for s, _a, s2 in zip(*np.nonzero(support)):
        preds[s2].add(int(s))

    candidate = np.ones(n, dtype=bool)
    candidate[list(mdp.goal_states)] = False

    def leaks(s):
        # some action puts mass on a state outside the candidate set
        return bool(np.any(support[s] & ~candidate[None, :]))

    wave = [s for s in range(n) if candidate[s] and leaks(s)]
    sweeps = 0
    while wave:
        sweeps += 1
        for s in wave:
            candidate[s] = False
        nxt = set()
        for s in wave:
            for p in preds[s]:
                if candidate[p]:
                    nxt.add(p)
        wave = sorted(p for p in nxt if leaks(p))
    traps = frozenset(int(s) for s in np.flatnonzero(candidate))
    return TrapReport(traps, sweeps, TrapMethod.FIXED_POINT)


def brute_force_trap_check(mdp: TabularMDP, s: int) -> bool:
    """True iff no goal state is reachable from ``s`` in the support graph."""
    if not 0 <= s < mdp.n_states:
        raise OutOfRange(f"state {s} outside [0, {mdp.n_states})")
    adj = _support(mdp).any(axis=1)
    seen = {s}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        if u in mdp.goal_states:
            return False
        for v in np.flatnonzero(adj[u]):
            v = int(v)
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return True


def brute_force_trap_set(mdp: TabularMDP) -> TrapReport:
    mdp.require_goals()
    traps = frozenset(s for s in range(mdp.n_states) if brute_force_trap_check(mdp, s))
    return TrapReport(traps, mdp.n_states, TrapMethod.BRUTE_FORCE)


def verify_trap_report(mdp: TabularMDP, report: TrapReport) -> list[str]:
    """Return a list of violated trap-set invariants (empty when consistent)."""
    problems = []
    overlap = report.trap_states & mdp.goal_states
    if overlap:
        problems.append(f"goal states marked as traps: {sorted(overlap)}")
    inside = np.zeros(mdp.n_states, dtype=bool)
    inside[list(report.trap_states)] = True
    for s in sorted(report.trap_states):
        for a in range(mdp.n_actions):
            if np.any((mdp.transitions[s, a] > 0) & ~inside):
                problems.append(f"state {s}, action {a} leaves the trap set")
    return problems


def random_mdp(rng: np.random.Generator, n_states: int = 8, n_actions: int = 3,
               n_goals: int = 1, p_deterministic: float = 0.5,
               max_support: int = 3) -> TabularMDP:
    """Sparse random MDP mixing deterministic and stochastic rows."""
    P = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            if rng.random() < p_deterministic:
                P[s, a, rng.integers(n_states)] = 1.0
            else:
                k = int(rng.integers(2, max_support + 1))
                succ = rng.choice(n_states, size=min(k, n_states), replace=False)
                P[s, a, succ] = rng.dirichlet(np.ones(len(succ)))
    goals = rng.choice(n_states, size=n_goals, replace=False)
    return TabularMDP(P, frozenset(int(g) for g in goals))
