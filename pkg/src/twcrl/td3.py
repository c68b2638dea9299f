"""TD3 (clipped double-Q, delayed actor, target smoothing) on the numpy nets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import DEFAULT_RULE, make_trajectory
from .errors import DimensionMismatch, OptimDiverged
from .nets import Adam, DenseNet, mse_and_grad


@dataclass
class TD3Config:
    hidden: tuple = (256, 256, 256)
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    noise_std: float = 0.2
    target_noise: float = 0.2
    noise_clip: float = 0.5
    batch_size: int = 512
    start_steps: int = 100
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    buffer_capacity: int = 1_000_000
    action_bound: float = 1.0

    @classmethod
    def desk(cls, **overrides) -> "TD3Config":
        """Small nets and batches for CPU-scale runs."""
        base = dict(hidden=(64, 64), batch_size=128)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, data: dict) -> "TD3Config":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown TD3 settings: {sorted(unknown)}")
        data = dict(data)
        if "hidden" in data:
            data["hidden"] = tuple(data["hidden"])
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class ReplayBatch:
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray

    def __post_init__(self):
        n = len(self.obs)
        if not all(len(a) == n for a in (self.action, self.reward, self.next_obs, self.done)):
            raise DimensionMismatch("replay batch arrays have different lengths")


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.action = np.zeros((self.capacity, action_dim))
        self.reward = np.zeros(self.capacity)
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.done = np.zeros(self.capacity)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, action, reward, next_obs, done) -> None:
        i = self.ptr
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng) -> np.ndarray:
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng) -> ReplayBatch:
        idx = self.sample_indices(batch_size, rng)
        return ReplayBatch(self.obs[idx], self.action[idx], self.reward[idx],
                           self.next_obs[idx], self.done[idx])

    def __getstate__(self):
        # only the filled part is worth pickling
        state = self.__dict__.copy()
        for name in ("obs", "action", "reward", "next_obs", "done"):
            state[name] = state[name][: self.size].copy()
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        for name in ("obs", "action", "reward", "next_obs", "done"):
            arr = state[name]
            full = np.zeros((self.capacity,) + arr.shape[1:])
            full[: len(arr)] = arr
            setattr(self, name, full)

    def relabel(self, scorer, reward_on: str = "next") -> None:
        """Recompute stored rewards with a new reward function."""
        if self.size == 0:
            return
        src = self.next_obs if reward_on == "next" else self.obs
        self.reward[: self.size] = scorer(src[: self.size])


class TD3:
    def __init__(self, obs_dim: int, action_dim: int, config: TD3Config = None,
                 seed=None, zero_init: bool = False):
        self.config = cfg = config or TD3Config()
        self.obs_dim, self.action_dim = obs_dim, action_dim
        rng = np.random.default_rng(seed)
        self.actor = DenseNet([obs_dim, *cfg.hidden, action_dim], "tanh_scaled",
                              bound=cfg.action_bound, rng=rng, zero_init=zero_init)
        self.critic1 = DenseNet([obs_dim + action_dim, *cfg.hidden, 1], rng=rng,
                                zero_init=zero_init)
        self.critic2 = DenseNet([obs_dim + action_dim, *cfg.hidden, 1], rng=rng,
                                zero_init=zero_init)
        self.actor_target = self.actor.copy()
        self.critic1_target = self.critic1.copy()
        self.critic2_target = self.critic2.copy()
        self.actor_opt = Adam(self.actor.params, lr=cfg.actor_lr)
        self.critic1_opt = Adam(self.critic1.params, lr=cfg.critic_lr)
        self.critic2_opt = Adam(self.critic2.params, lr=cfg.critic_lr)
        self.replay = ReplayBuffer(cfg.buffer_capacity, obs_dim, action_dim)
        self.updates = 0
        self.actor_updates = 0
        self.env_steps = 0

    def select_action(self, obs, explore: bool = False, rng=None) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape != (self.obs_dim,):
            raise DimensionMismatch(f"observation shape {obs.shape} != ({self.obs_dim},)")
        a = self.actor.forward(obs)
        if explore:
            a = a + rng.normal(0.0, self.config.noise_std, size=self.action_dim)
        b = self.config.action_bound
        return np.clip(a, -b, b)

    def critic_target(self, batch: ReplayBatch, rng=None) -> np.ndarray:
        """Clipped double-Q target; ``rng=None`` disables smoothing noise."""
        cfg = self.config
        a2 = self.actor_target.forward_train(batch.next_obs)[0]
        if rng is not None:
            noise = rng.normal(0.0, cfg.target_noise, size=a2.shape)
            a2 = a2 + np.clip(noise, -cfg.noise_clip, cfg.noise_clip)
        a2 = np.clip(a2, -cfg.action_bound, cfg.action_bound)
        sa2 = np.concatenate([batch.next_obs, a2], axis=1)
        q1 = self.critic1_target.forward_train(sa2)[0]
        q2 = self.critic2_target.forward_train(sa2)[0]
        q = np.minimum(q1, q2)[:, 0]
        return batch.reward + cfg.gamma * (1.0 - batch.done) * q

    def soft_update(self, tau: float = None) -> None:
        tau = self.config.tau if tau is None else tau
        self.actor_target.soft_update_from(self.actor, tau)
        self.critic1_target.soft_update_from(self.critic1, tau)
        self.critic2_target.soft_update_from(self.critic2, tau)

    def update(self, rng, batch: ReplayBatch = None) -> dict:
        """One critic step; every ``policy_delay``-th call also an actor step."""
        cfg = self.config
        if batch is None:
            batch = self.replay.sample(cfg.batch_size, rng)
        y = self.critic_target(batch, rng)[:, None]
        sa = np.concatenate([batch.obs, batch.action], axis=1)
        report = {}
        for name, critic, opt in (("critic1_loss", self.critic1, self.critic1_opt),
                                  ("critic2_loss", self.critic2, self.critic2_opt)):
            q, cache = critic.forward_train(sa)
            loss, g = mse_and_grad(q, y)
            if not np.isfinite(loss):
                raise OptimDiverged(f"{name} became non-finite")
            grads, _ = critic.backward(cache, g)
            opt.step(grads)
            report[name] = loss
        self.updates += 1
        report["actor_loss"] = None
        if self.updates % cfg.policy_delay == 0:
            a, cache_a = self.actor.forward_train(batch.obs)
            q, cache_q = self.critic1.forward_train(np.concatenate([batch.obs, a], axis=1))
            n = len(q)
            _, g_in = self.critic1.backward(cache_q, np.full_like(q, -1.0 / n))
            grads, _ = self.actor.backward(cache_a, g_in[:, self.obs_dim:])
            self.actor_opt.step(grads)
            self.soft_update()
            self.actor_updates += 1
            report["actor_loss"] = float(-q.mean())
        return report

    def policy(self, obs) -> np.ndarray:
        return self.select_action(obs, explore=False)

    def save(self, path, **header) -> None:
        data = dict(header)
        data.update({
            "kind": "policy",
            "config": self.config.to_dict(),
            "net": self.actor.to_dict(),
            "critic1": self.critic1.to_dict(),
            "critic2": self.critic2.to_dict(),
        })
        Path(path).write_text(json.dumps(data), encoding="utf-8")


def td3_update(td3: TD3, step_index: int = None, rng=None) -> dict:
    return td3.update(rng)


def load_actor(path) -> DenseNet:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return DenseNet.from_dict(data["net"])


class ActorPolicy:
    """Deterministic policy wrapper around a bare actor network."""

    def __init__(self, actor: DenseNet, bound: float = 1.0):
        self.actor, self.bound = actor, bound

    def __call__(self, obs) -> np.ndarray:
        return np.clip(self.actor.forward(np.asarray(obs, dtype=np.float64)),
                       -self.bound, self.bound)


@dataclass
class EpisodeMetrics:
    episode: int
    env_return: float
    learned_return: float
    success: bool
    steps: int


def train_policy(td3: TD3, env, scorer, total_steps: int, rng=None, env_rng=None,
                 rule=DEFAULT_RULE, reward_on: str = "next"):
    """Off-policy training loop against ``scorer``.

    ``scorer`` maps a batch of observations to rewards; ``None`` trains on
    the environment reward instead. Uniform random actions are used for
    the first ``start_steps`` environment steps of the agent's lifetime.
    Transitions after absorption are not stored (the absorbing transition
    carries ``done = 1``); truncation keeps ``done = 0``.

    Returns ``(trajectories, metrics)`` for the episodes finished here.
    """
    rng = np.random.default_rng(rng)
    env_rng = rng if env_rng is None else np.random.default_rng(env_rng)
    cfg = td3.config
    trajectories, metrics = [], []
    steps = 0
    while steps < total_steps:
        obs = env.reset(int(env_rng.integers(2**63)))
        states, actions, rewards = [obs], [], []
        learned_return = 0.0
        absorbed = False
        truncated = False
        while not truncated and steps < total_steps:
            if absorbed:
                action = np.zeros(td3.action_dim)
            elif td3.env_steps < cfg.start_steps:
                action = rng.uniform(-cfg.action_bound, cfg.action_bound, td3.action_dim)
            else:
                action = td3.select_action(obs, explore=True, rng=rng)
            next_obs, env_reward, now_absorbed, truncated = env.step(action)
            if scorer is None:
                r = env_reward
            else:
                src = next_obs if reward_on == "next" else obs
                r = float(scorer(src[None, :])[0])
            learned_return += r
            if not absorbed:
                td3.replay.add(obs, action, r, next_obs, now_absorbed)
            absorbed = now_absorbed
            states.append(next_obs)
            actions.append(action)
            rewards.append(env_reward)
            obs = next_obs
            steps += 1
            td3.env_steps += 1
            if len(td3.replay) >= cfg.batch_size:
                td3.update(rng)
        traj = make_trajectory(states, actions, rewards, env.horizon, rule)
        trajectories.append(traj)
        metrics.append(EpisodeMetrics(
            len(metrics), traj.episodic_return, learned_return,
            traj.outcome.value == "success", td3.env_steps,
        ))
    return trajectories, metrics
