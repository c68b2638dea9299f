import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twcrl.core import (
    DemoSet,
    Outcome,
    ReturnThreshold,
    TabularMDP,
    TerminalGoal,
    Trajectory,
    classify_trajectory,
    load_demos,
    make_trajectory,
    save_demos,
    truncate_trajectory,
)
from twcrl.envs import MazeEnv, goal_reached, load_map, scripted_expert
from twcrl.errors import (
    InvalidHorizon,
    InvalidTrajectory,
    MissingGoals,
    ParseError,
    ValidationError,
)


def random_traj(rng, n, horizon=None, dim=4, reward_p=0.3):
    states = rng.normal(size=(n + 1, dim))
    actions = rng.uniform(-1, 1, size=(n, 2))
    rewards = (rng.random(n) < reward_p).astype(float)
    return make_trajectory(states, actions, rewards, horizon or max(n, 1), ReturnThreshold(1.0))


@st.composite
def demo_sets(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    count = draw(st.integers(0, 5))
    rng = np.random.default_rng(seed)
    lengths = [draw(st.integers(1, 30)) for _ in range(count)]
    return DemoSet([random_traj(rng, n, horizon=n + draw(st.integers(0, 5))) for n in lengths])


def test_terminal_goal_rule():
    states = np.array([[0.0, 0.0], [1.0, 1.0]])
    traj = Trajectory(states, [[0.1, 0.1]], [0.0], "failure", 10)
    inside = TerminalGoal(lambda s: np.hypot(*(s - 1.0)) < 0.5)
    outside = TerminalGoal(lambda s: False)
    assert classify_trajectory(traj, inside) is Outcome.SUCCESS
    assert classify_trajectory(traj, outside) is Outcome.FAILURE


@pytest.mark.parametrize("ret, expected", [(5.0, Outcome.SUCCESS), (4.99, Outcome.FAILURE)])
def test_return_threshold_is_inclusive(ret, expected):
    traj = Trajectory(np.zeros((2, 2)), [[0.0, 0.0]], [ret], "failure", 5)
    assert classify_trajectory(traj, ReturnThreshold(5.0)) is expected


def test_empty_trajectory_cannot_be_classified():
    traj = Trajectory(np.zeros((1, 2)), np.zeros((0, 2)), [], "failure", 5)
    with pytest.raises(InvalidTrajectory):
        classify_trajectory(traj, ReturnThreshold(1.0))


def test_trajectory_shape_checks():
    with pytest.raises(InvalidTrajectory):
        Trajectory(np.zeros((3, 2)), [[0, 0]], [0.0], "failure", 5)
    with pytest.raises(InvalidTrajectory):
        Trajectory(np.zeros((2, 2)), [[0, 0], [0, 0]], [0.0], "failure", 5)
    with pytest.raises(InvalidHorizon):
        Trajectory(np.zeros((2, 2)), [[0, 0]], [0.0], "failure", 0)
    with pytest.raises(InvalidTrajectory):
        Trajectory(np.zeros((3, 2)), [[0, 0], [0, 0]], [0.0, 0.0], "failure", 1)
    with pytest.raises(ValidationError):
        Trajectory(np.zeros((2, 2)), [[1.5, 0]], [0.0], "failure", 5)


def test_trajectory_arrays_are_read_only(rng):
    traj = random_traj(rng, 5)
    with pytest.raises(ValueError):
        traj.states[0, 0] = 1.0


def test_transitions_view(rng):
    traj = random_traj(rng, 4)
    tr = traj.transitions
    assert len(tr) == 4
    assert np.array_equal(tr[2].next_state, traj.states[3])
    assert tr[3].step_index == 3


def test_truncate_examples(rng):
    long = random_traj(rng, 300, horizon=300)
    assert truncate_trajectory(long, 300) == long
    cut = truncate_trajectory(long, 100)
    assert len(cut) == 100 and cut.horizon == 100
    assert np.array_equal(cut.states, long.states[:101])
    short = random_traj(rng, 50, horizon=300)
    assert len(truncate_trajectory(short, 100)) == 50
    with pytest.raises(InvalidHorizon):
        truncate_trajectory(long, 0)


def test_truncate_reclassifies():
    rewards = [0.0] * 9 + [1.0]
    traj = make_trajectory(np.zeros((11, 2)), np.zeros((10, 2)), rewards, 10, ReturnThreshold(1.0))
    assert traj.outcome is Outcome.SUCCESS
    assert truncate_trajectory(traj, 5).outcome is Outcome.FAILURE


@given(st.integers(0, 2**32 - 1), st.integers(1, 60), st.integers(1, 80))
def test_truncate_idempotent(seed, n, T):
    traj = random_traj(np.random.default_rng(seed), n)
    once = truncate_trajectory(traj, T)
    assert truncate_trajectory(once, T) == once


def test_demoset_split_and_counts(rng):
    a, b = random_traj(rng, 3, reward_p=1.0), random_traj(rng, 4, reward_p=0.0)
    demos = DemoSet.from_split([a], [b])
    assert demos.successes == (a,) and demos.failures == (b,)
    assert demos.n_states == 4 + 5
    with pytest.raises(ValidationError):
        DemoSet.from_split([b], [])
    assert len(demos + [a]) == 3


def test_save_load_two_trajectories(tmp_path, rng):
    demos = DemoSet([random_traj(rng, 7), random_traj(rng, 3)])
    path = tmp_path / "d.jsonl"
    save_demos(demos, path)
    assert load_demos(path) == demos


def test_empty_file_gives_empty_set(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert len(load_demos(path)) == 0


def test_out_of_bound_action_rejected(tmp_path, rng):
    rec = json.loads(json.dumps({
        "states": [[0, 0], [0.2, 0]], "actions": [[1.5, 0.0]], "env_rewards": [0.0],
        "outcome": "failure", "episodic_return": 0.0, "horizon": 10,
    }))
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(ValidationError):
        load_demos(path)


def test_parse_errors_carry_line_numbers(tmp_path, rng):
    path = tmp_path / "d.jsonl"
    save_demos(DemoSet([random_traj(rng, 3)]), path)
    with open(path, "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(ParseError) as err:
        load_demos(path)
    assert err.value.line == 2


def test_tampered_outcome_and_return_rejected(tmp_path, rng):
    traj = random_traj(rng, 5, reward_p=0.0)
    rec = json.loads(json.dumps({
        "states": traj.states.tolist(), "actions": traj.actions.tolist(),
        "env_rewards": traj.env_rewards.tolist(), "outcome": "success",
        "episodic_return": 0.0, "horizon": 5,
    }))
    path = tmp_path / "d.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(ValidationError):
        load_demos(path)
    rec["outcome"], rec["episodic_return"] = "failure", 3.0
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(ValidationError):
        load_demos(path)


@given(demo_sets())
def test_demo_roundtrip_property(tmp_path_factory, demos):
    path = tmp_path_factory.mktemp("demos") / "d.jsonl"
    save_demos(demos, path)
    assert load_demos(path) == demos


def test_saved_file_is_prefix_after_growth(tmp_path, rng):
    path = tmp_path / "d.jsonl"
    first = DemoSet([random_traj(rng, 4)])
    save_demos(first, path)
    before = path.read_text()
    save_demos(first + [random_traj(rng, 6)], path)
    assert path.read_text().startswith(before)


@pytest.mark.parametrize("seed", range(8))
def test_rules_agree_on_maze_episodes(seed):
    spec = load_map("umaze")
    env = MazeEnv(spec)
    rng = np.random.default_rng(seed)
    goal_rule = TerminalGoal(lambda s: goal_reached(spec, s))
    if seed % 2:
        traj = scripted_expert(spec, seed)
    else:
        obs = env.reset(seed)
        states, actions, rewards = [obs], [], []
        for _ in range(spec.horizon):
            a = rng.uniform(-1, 1, 2)
            obs, r, _, _ = env.step(a)
            states.append(obs), actions.append(a), rewards.append(r)
        traj = make_trajectory(states, actions, rewards, spec.horizon, goal_rule)
    assert classify_trajectory(traj, goal_rule) is classify_trajectory(traj, ReturnThreshold(1.0))


def chain3():
    P = np.zeros((3, 2, 3))
    P[0, :, 1] = 1.0
    P[1, :, 1] = 1.0
    P[2, :, 2] = 1.0
    return TabularMDP(P, frozenset({2}))


def test_mdp_json_roundtrip(tmp_path):
    mdp = chain3()
    path = tmp_path / "m.json"
    path.write_text(json.dumps(mdp.to_json()))
    back = TabularMDP.load(path)
    assert np.array_equal(back.transitions, mdp.transitions)
    assert back.goal_states == mdp.goal_states


def test_mdp_validation():
    with pytest.raises(ValidationError):
        TabularMDP(np.full((2, 1, 2), 0.6))
    with pytest.raises(ValidationError):
        TabularMDP.from_json({"n_states": 3, "n_actions": 1, "goals": [0],
                              "transitions": [[[1.0, 0.0]], [[0.0, 1.0]]]})
    with pytest.raises(ParseError):
        TabularMDP.from_json({"n_actions": 1})
    with pytest.raises(MissingGoals):
        TabularMDP(np.ones((1, 1, 1))).require_goals()
