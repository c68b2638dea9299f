import numpy as np
import pytest
from hypothesis import given, strategies as st

from twcrl.core import TabularMDP
from twcrl.errors import MissingGoals, OutOfRange
from twcrl.traps import (
    TrapMethod,
    brute_force_trap_check,
    brute_force_trap_set,
    compute_trap_set,
    random_mdp,
    verify_trap_report,
)


def chain3():
    P = np.zeros((3, 2, 3))
    P[0, :, 1] = 1.0
    P[1, :, 1] = 1.0
    P[2, :, 2] = 1.0
    return TabularMDP(P, frozenset({2}))


def test_three_state_chain():
    report = compute_trap_set(chain3())
    assert report.trap_states == {0, 1}
    assert report.method is TrapMethod.FIXED_POINT
    assert verify_trap_report(chain3(), report) == []


def test_every_state_can_reach_goal():
    P = np.zeros((4, 2, 4))
    for s in range(4):
        P[s, 0, s] = 1.0
        P[s, 1, [s, 3]] = 0.5
    P[3, :, :] = 0
    P[3, :, 3] = 1.0
    assert compute_trap_set(TabularMDP(P, frozenset({3}))).trap_states == frozenset()


def test_brute_force_examples():
    mdp = chain3()
    assert brute_force_trap_check(mdp, 2) is False
    assert brute_force_trap_check(mdp, 1) is True
    assert brute_force_trap_check(mdp, 0) is True
    with pytest.raises(OutOfRange):
        brute_force_trap_check(mdp, 3)


def test_missing_goals():
    with pytest.raises(MissingGoals):
        compute_trap_set(TabularMDP(np.ones((1, 1, 1))))


def test_leak_one_step_deeper_needs_two_sweeps():
    # 0 -> 1 -> 2 (goal); only 1 leaks directly, 0 leaks once 1 is removed
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = P[1, 0, 2] = P[2, 0, 2] = 1.0
    report = compute_trap_set(TabularMDP(P, frozenset({2})))
    assert report.trap_states == frozenset() and report.iterations == 2


@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 3), st.integers(1, 3))
def test_fixed_point_matches_reachability(seed, n, a, g):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, n_states=n, n_actions=a, n_goals=min(g, n))
    fixed = compute_trap_set(mdp)
    assert fixed.trap_states == brute_force_trap_set(mdp).trap_states
    assert verify_trap_report(mdp, fixed) == []


@given(st.integers(0, 2**32 - 1))
def test_edge_into_goal_removes_state(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, n_states=8, n_actions=3, n_goals=1)
    traps = compute_trap_set(mdp).trap_states
    if not traps:
        return
    s = sorted(traps)[int(rng.integers(len(traps)))]
    goal = next(iter(mdp.goal_states))
    P = mdp.transitions.copy()
    P[s, 0] *= 0.5
    P[s, 0, goal] += 0.5
    after = compute_trap_set(TabularMDP(P, mdp.goal_states)).trap_states
    assert after <= traps and s not in after


@given(st.integers(0, 2**32 - 1))
def test_one_step_from_trap_stays_in_trap(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng)
    traps = compute_trap_set(mdp).trap_states
    for s in traps:
        for a in range(mdp.n_actions):
            nxt = rng.choice(mdp.n_states, p=mdp.transitions[s, a])
            assert nxt in traps


def test_verify_flags_bad_reports():
    from twcrl.traps import TrapReport
    mdp = chain3()
    bad = TrapReport(frozenset({1, 2}), 0, TrapMethod.FIXED_POINT)
    problems = verify_trap_report(mdp, bad)
    assert any("goal" in p for p in problems)
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 1] = 1.0
    leaky = TrapReport(frozenset({0}), 0, TrapMethod.FIXED_POINT)
    assert verify_trap_report(TabularMDP(P, frozenset({1})), leaky)
