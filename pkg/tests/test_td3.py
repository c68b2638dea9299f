import pickle

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twcrl.envs import MazeEnv, load_map
from twcrl.errors import DimensionMismatch
from twcrl.td3 import (
    ActorPolicy,
    ReplayBatch,
    ReplayBuffer,
    TD3,
    TD3Config,
    load_actor,
    td3_update,
    train_policy,
)


def small(**kw):
    return TD3Config.desk(hidden=(16, 16), batch_size=32, buffer_capacity=5000, **kw)


def const_critic(net, value):
    net.weights[-1][...] = 0.0
    net.biases[-1][...] = value


def test_config_defaults_and_roundtrip():
    cfg = TD3Config()
    assert (cfg.gamma, cfg.tau, cfg.policy_delay, cfg.batch_size, cfg.start_steps) == (0.99, 0.005, 2, 512, 100)
    assert cfg.hidden == (256, 256, 256) and cfg.buffer_capacity == 1_000_000
    assert TD3Config.from_dict(cfg.to_dict()) == cfg
    assert TD3Config.desk().hidden == (64, 64)
    with pytest.raises(ValueError):
        TD3Config.from_dict({"lr": 1})


def test_select_action_properties(rng):
    agent = TD3(4, 2, small(), seed=0)
    obs = rng.normal(size=4)
    assert np.array_equal(agent.select_action(obs), agent.select_action(obs))
    a1 = agent.select_action(obs, explore=True, rng=np.random.default_rng(3))
    a2 = agent.select_action(obs, explore=True, rng=np.random.default_rng(3))
    assert np.array_equal(a1, a2)
    with pytest.raises(DimensionMismatch):
        agent.select_action(np.zeros(3))


@given(st.integers(0, 2**32 - 1))
def test_actions_bounded(seed):
    rng = np.random.default_rng(seed)
    agent = TD3(4, 2, small(), seed=seed)
    a = agent.select_action(rng.normal(scale=50, size=4), explore=True, rng=rng)
    assert np.all(np.abs(a) <= 1.0)


def batch_of(reward, done, n=1):
    return ReplayBatch(np.zeros((n, 4)), np.zeros((n, 2)), np.full(n, reward),
                       np.zeros((n, 4)), np.full(n, done))


def test_critic_target_examples():
    agent = TD3(4, 2, small(), seed=0)
    const_critic(agent.critic1_target, 2.0)
    const_critic(agent.critic2_target, 3.0)
    assert agent.critic_target(batch_of(1.0, 0.0))[0] == pytest.approx(2.98, abs=1e-12)
    assert agent.critic_target(batch_of(1.0, 1.0))[0] == 1.0
    const_critic(agent.critic2_target, 2.0)
    assert agent.critic_target(batch_of(0.0, 0.0))[0] == pytest.approx(0.99 * 2.0)


@given(st.integers(0, 2**32 - 1))
def test_target_between_min_and_max_branch(seed):
    rng = np.random.default_rng(seed)
    agent = TD3(4, 2, small(), seed=seed)
    n = 16
    b = ReplayBatch(rng.normal(size=(n, 4)), rng.uniform(-1, 1, (n, 2)), rng.normal(size=n),
                    rng.normal(size=(n, 4)), np.zeros(n))
    y = agent.critic_target(b)
    a2 = np.clip(agent.actor_target.forward(b.next_obs), -1, 1)
    sa = np.concatenate([b.next_obs, a2], axis=1)
    q1, q2 = agent.critic1_target.forward(sa)[:, 0], agent.critic2_target.forward(sa)[:, 0]
    assert np.allclose(y, b.reward + 0.99 * np.minimum(q1, q2), rtol=1e-12, atol=1e-12)
    assert np.all(y <= b.reward + 0.99 * np.maximum(q1, q2) + 1e-12)


def test_policy_delay():
    agent = TD3(4, 2, small(), seed=0)
    rng = np.random.default_rng(0)
    for _ in range(40):
        agent.replay.add(rng.normal(size=4), rng.uniform(-1, 1, 2), rng.normal(), rng.normal(size=4), False)
    r1, r2 = agent.update(rng), agent.update(rng)
    assert r1["actor_loss"] is None and r2["actor_loss"] is not None
    assert agent.actor_updates == 1 and agent.updates == 2
    td3_update(agent, rng=rng)
    assert agent.updates == 3


def test_soft_update_tau_one_and_trailing():
    agent = TD3(4, 2, small(), seed=0)
    online = agent.actor.copy()
    agent.actor_target = TD3(4, 2, small(), seed=1).actor
    gap0 = sum(np.linalg.norm(t - p) for t, p in zip(agent.actor_target.params, online.params))
    for n in range(1, 6):
        agent.soft_update(0.1)
        gap = sum(np.linalg.norm(t - p) for t, p in zip(agent.actor_target.params, online.params))
        assert gap == pytest.approx(gap0 * 0.9 ** n, rel=1e-9)
    agent.soft_update(1.0)
    assert agent.actor_target == agent.actor and agent.critic1_target == agent.critic1


def test_zero_reward_zero_init_fixed_point():
    agent = TD3(4, 2, small(), seed=0, zero_init=True)
    rng = np.random.default_rng(0)
    for _ in range(40):
        agent.replay.add(rng.normal(size=4), rng.uniform(-1, 1, 2), 0.0, rng.normal(size=4), False)
    before = [n.copy() for n in (agent.actor, agent.critic1, agent.critic2)]
    for _ in range(4):
        rep = agent.update(rng)
        assert rep["critic1_loss"] == 0.0 and rep["critic2_loss"] == 0.0
    assert [agent.actor, agent.critic1, agent.critic2] == before


def test_replay_uniformity():
    buf = ReplayBuffer(50, 1, 1)
    for i in range(70):
        buf.add([i], [0.0], 0.0, [i], False)
    assert len(buf) == 50
    counts = np.bincount(buf.sample_indices(100_000, np.random.default_rng(0)), minlength=50)
    p = 1 / 50
    sigma = np.sqrt(100_000 * p * (1 - p))
    assert np.all(np.abs(counts - 100_000 * p) <= 5 * sigma)


def test_replay_relabel_and_pickle():
    buf = ReplayBuffer(10, 2, 1)
    for i in range(4):
        buf.add([i, 0], [0.0], 0.0, [i + 1, 0], i == 3)
    buf.relabel(lambda obs: obs[:, 0] * 2)
    assert np.array_equal(buf.reward[:4], [2, 4, 6, 8])
    buf.relabel(lambda obs: obs[:, 0], reward_on="current")
    assert np.array_equal(buf.reward[:4], [0, 1, 2, 3])
    back = pickle.loads(pickle.dumps(buf))
    assert back.obs.shape == (10, 2) and back.size == 4
    assert np.array_equal(back.reward, buf.reward)
    with pytest.raises(DimensionMismatch):
        ReplayBatch(np.zeros((2, 1)), np.zeros((1, 1)), np.zeros(2), np.zeros((2, 1)), np.zeros(2))


def test_train_policy_zero_steps():
    agent = TD3(4, 2, small(), seed=0)
    before = agent.actor.copy()
    trajs, metrics = train_policy(agent, MazeEnv(load_map("umaze")), None, 0, rng=0)
    assert trajs == [] and metrics == [] and agent.env_steps == 0 and agent.actor == before


def test_train_policy_records_bounded_actions_and_is_deterministic():
    def run():
        agent = TD3(4, 2, small(start_steps=50), seed=0)
        env = MazeEnv(load_map("umaze", horizon=60))
        trajs, metrics = train_policy(agent, env, lambda o: -o[:, 0], 240, rng=1, env_rng=2)
        return agent, trajs, metrics

    agent, trajs, metrics = run()
    assert len(trajs) == 4 and metrics[-1].steps == 240
    stored = agent.replay.action[: len(agent.replay)]
    assert np.all(np.abs(stored) <= 1.0)
    assert agent.updates == 240 - 32 + 1
    agent2, trajs2, metrics2 = run()
    assert metrics == metrics2 and agent.actor == agent2.actor
    assert all(a == b for a, b in zip(trajs, trajs2))


class AbsorbAtThree:
    horizon = 10
    action_dim = 2

    def reset(self, seed=None):
        self.t = 0
        return np.zeros(4)

    def step(self, action):
        self.t += 1
        obs = np.full(4, float(min(self.t, 3)))
        return obs, float(self.t >= 3), self.t >= 3, self.t >= self.horizon

    def goal_reached(self, obs):
        return obs[0] >= 3


def test_absorbed_steps_not_stored():
    agent = TD3(4, 2, small(), seed=0)
    trajs, metrics = train_policy(agent, AbsorbAtThree(), None, 10, rng=0)
    assert len(trajs) == 1 and len(trajs[0]) == 10
    assert len(agent.replay) == 3
    assert np.array_equal(agent.replay.done[:3], [0.0, 0.0, 1.0])
    assert metrics[0].env_return == 8.0 and metrics[0].success


def test_actor_checkpoint_roundtrip(tmp_path, rng):
    agent = TD3(4, 2, small(), seed=0)
    path = tmp_path / "policy.json"
    agent.save(path, iteration=3)
    actor = load_actor(path)
    assert actor == agent.actor
    obs = rng.normal(size=4)
    assert np.array_equal(ActorPolicy(actor)(obs), agent.policy(obs))
