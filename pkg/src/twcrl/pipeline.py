"""The iterative loop: label, fit the reward, train the policy, collect, repeat."""

from __future__ import annotations

import csv
import json
import logging
import math
import pickle
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import (
    DemoSet,
    Outcome,
    ReturnThreshold,
    TerminalGoal,
    load_demos,
    make_trajectory,
    save_demos,
)
from .envs import MazeEnv, OBS_LAYOUT, goal_reached, load_map, scripted_expert
from .envs.heatmap import reward_heatmap, save_csv
from .errors import NoData, ValidationError
from .reward import CONSTANT, TIME_WEIGHTED, RewardModel, label_dataset, save_reward, train_reward
from .td3 import TD3, TD3Config, train_policy
from .timeweight import TimeWeightParams

log = logging.getLogger(__name__)

STREAMS = ("env", "policy", "reward", "noise", "demo", "eval")
METRIC_COLUMNS = ("iteration", "episode", "env_return", "learned_return", "success", "steps")
EVAL_COLUMNS = ("iteration", "env_steps", "mean_env_return", "std_env_return", "success_rate")


def make_streams(seed: int) -> dict:
    """Independent named generators derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


@dataclass
class RunConfig:
    map: str = "umaze"
    goal_cells_mode: str = "one"
    alpha: float = 2.0
    horizon: int = 300
    expert_demos: str = None
    n_expert_demos: int = 5
    reward_hidden: tuple = (64, 64)
    reward_lr: float = 1e-3
    reward_epochs: int = 200
    reward_batch_size: int = 256
    reward_batches_per_epoch: int = 1
    reward_update_interval: int = 10
    reward_reset: bool = False
    td3: dict = field(default_factory=lambda: TD3Config.desk().to_dict())
    iterations: int = 30
    rollouts_per_iteration: int = 20
    max_env_steps: int = None
    rule: str = "terminal_goal"
    return_threshold: float = 1.0
    seed: int = 0
    out_dir: str = "run"
    constant_labels: bool = False
    use_success_only: bool = False
    use_failure_only: bool = False
    vanilla_td3: bool = False
    relabel_replay: bool = True
    reward_on: str = "next"
    collapse_absorbed: bool = True
    absorb_tol: float = 0.0
    eval_episodes: int = 10
    converge_success: float = 0.95
    converge_patience: int = 3
    heatmap_resolution: int = 32
    write_heatmaps: bool = True

    def __post_init__(self):
        self.reward_hidden = tuple(self.reward_hidden)
        if self.rule not in ("terminal_goal", "return_threshold"):
            raise ValidationError(f"unknown classification rule {self.rule!r}")
        if self.use_success_only and self.use_failure_only:
            raise ValidationError("use_success_only and use_failure_only are exclusive")
        if self.vanilla_td3 and (self.constant_labels or self.use_success_only
                                 or self.use_failure_only):
            raise ValidationError("vanilla_td3 excludes every reward-learning ablation")
        if self.reward_on not in ("next", "current"):
            raise ValidationError("reward_on must be 'next' or 'current'")
        if self.absorb_tol < 0:
            raise ValidationError("absorb_tol must be non-negative")
        if self.rollouts_per_iteration % self.reward_update_interval:
            raise ValidationError("rollouts_per_iteration must be a multiple of "
                                  "reward_update_interval")
        TD3Config.from_dict(self.td3)
        TimeWeightParams(self.alpha, self.horizon)

    @classmethod
    def full_scale(cls, **overrides) -> "RunConfig":
        """Full-size reward, actor and critic networks with large minibatches."""
        base = dict(reward_hidden=(128, 128, 128), td3=TD3Config().to_dict(),
                    reward_batches_per_epoch=None)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reward_hidden"] = list(self.reward_hidden)
        return d


@dataclass
class RunArtifacts:
    out_dir: Path
    reward_checkpoints: list = field(default_factory=list)
    policy_checkpoints: list = field(default_factory=list)
    heatmaps: list = field(default_factory=list)
    demos_path: Path = None
    metrics_path: Path = None
    eval_path: Path = None
    eval_history: list = field(default_factory=list)
    env_steps: int = 0
    converged: bool = False


def build_rule(config: RunConfig, spec):
    if config.rule == "terminal_goal":
        return TerminalGoal(lambda obs, spec=spec: goal_reached(spec, obs))
    return ReturnThreshold(config.return_threshold)


def _rollout(policy, env, seed, noise_std=0.0, rng=None, rule=None):
    if hasattr(policy, "reset"):
        policy.reset()
    obs = env.reset(seed)
    states, actions, rewards = [obs], [], []
    truncated = absorbed = False
    while not truncated:
        if absorbed:
            action = np.zeros(env.action_dim)
        else:
            action = np.asarray(policy(obs), dtype=np.float64)
            if noise_std > 0:
                action = np.clip(action + rng.normal(0.0, noise_std, action.shape), -1.0, 1.0)
        obs, reward, absorbed, truncated = env.step(action)
        states.append(obs)
        actions.append(action)
        rewards.append(reward)
    rule = rule or TerminalGoal(env.goal_reached)
    return make_trajectory(states, actions, rewards, env.horizon, rule)


def collect_rollouts(policy, env, n: int, rule=None, seed=None,
                     noise_std: float = 0.2) -> DemoSet:
    """``n`` noisy episodes, each classified by ``rule``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    trajs = [_rollout(policy, env, int(rng.integers(2**63)), noise_std, rng, rule)
             for _ in range(n)]
    return DemoSet(trajs)


def evaluate(policy, env, n_episodes: int, seed=None) -> dict:
    """Noise-free episodes; mean/std of env return and the success rate."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    rng = np.random.default_rng(seed)
    returns, successes = [], []
    for _ in range(n_episodes):
        traj = _rollout(policy, env, int(rng.integers(2**63)))
        returns.append(traj.episodic_return)
        successes.append(traj.outcome is Outcome.SUCCESS)
    return {
        "mean_env_return": float(np.mean(returns)),
        "std": float(np.std(returns)),
        "success_rate": float(np.mean(successes)),
    }


class _RunState:
    """Everything needed to resume a run at an iteration boundary."""

    def __init__(self, config, spec):
        self.streams = make_streams(config.seed)
        self.td3 = TD3(4, 2, TD3Config.from_dict(config.td3), seed=self.streams["policy"])
        self.reward = None
        if not config.vanilla_td3:
            self.reward = self._new_reward(config)
        self.demos = DemoSet()
        self.iteration = 0
        self.chunks = 0
        self.episodes = 0
        self.eval_history = []
        self.eval_seed = int(self.streams["eval"].integers(2**63))
        self.reward_paths, self.policy_paths, self.heatmap_paths = [], [], []

    def _new_reward(self, config):
        return RewardModel.create(
            4, config.reward_hidden, TimeWeightParams(config.alpha, config.horizon),
            config.reward_lr, seed=self.streams["reward"],
        )


def _expert_demos(config, spec, streams) -> DemoSet:
    if config.expert_demos:
        path = Path(config.expert_demos)
        if not path.exists():
            raise NoData(f"expert demo file {path} does not exist")
        demos = load_demos(path)
    elif config.n_expert_demos > 0:
        rng = streams["demo"]
        demos = DemoSet([scripted_expert(spec, int(rng.integers(2**63)))
                         for _ in range(config.n_expert_demos)])
    else:
        raise NoData("no expert demonstrations configured")
    if not demos.successes:
        raise NoData("expert demos contain no successful trajectory")
    return demos


def _fit_reward(config, state: _RunState) -> bool:
    """Refit the reward on the current dataset; False if nothing to learn from."""
    if config.reward_reset:
        state.reward = state._new_reward(config)
    try:
        data = label_dataset(
            state.demos, state.reward.params,
            labels=CONSTANT if config.constant_labels else TIME_WEIGHTED,
            collapse_absorbed=config.collapse_absorbed,
            absorb_tol=config.absorb_tol,
            include_success=not config.use_failure_only,
            include_failure=not config.use_success_only,
        )
    except NoData:
        return False
    train_reward(state.reward, data, config.reward_epochs, config.reward_batch_size,
                 seed=state.streams["reward"],
                 max_batches_per_epoch=config.reward_batches_per_epoch)
    return True


def _chunk_fits(config, state, steps) -> bool:
    # the step budget is spent in whole chunks and never overshot
    return config.max_env_steps is None or state.td3.env_steps + steps <= config.max_env_steps


def _write_csv(path, columns, rows, append):
    new = not append or not Path(path).exists()
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] for c in columns])


def run_twcrl(config: RunConfig, resume: bool = False) -> RunArtifacts:
    """Run the loop for ``config.iterations`` iterations (or until converged).

    Each iteration collects ``rollouts_per_iteration`` training episodes in
    chunks of ``reward_update_interval``; the reward is refitted on the
    whole dataset before every chunk and the replay buffer relabelled.
    With ``resume`` the run continues from ``out_dir/checkpoint.pkl``.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = load_map(config.map, horizon=config.horizon,
                    goal_cells_mode=config.goal_cells_mode)
    env = MazeEnv(spec)
    rule = build_rule(config, spec)
    ckpt = out / "checkpoint.pkl"
    art = RunArtifacts(out, demos_path=out / "demos.jsonl",
                       metrics_path=out / "metrics.csv", eval_path=out / "eval.csv")

    if resume and ckpt.exists():
        with open(ckpt, "rb") as fh:
            state = pickle.load(fh)
    else:
        state = _RunState(config, spec)
        state.demos = _expert_demos(config, spec, state.streams)
        save_demos(state.demos, art.demos_path)
        _write_csv(art.metrics_path, METRIC_COLUMNS, [], append=False)
        _write_csv(art.eval_path, EVAL_COLUMNS, [], append=False)
        if config.iterations == 0 and state.reward is not None:
            _fit_reward(config, state)
            path = out / "reward_iter0.json"
            save_reward(state.reward, path, OBS_LAYOUT)
            state.reward_paths.append(path)

    chunks_per_iter = config.rollouts_per_iteration // config.reward_update_interval
    steps_per_chunk = config.reward_update_interval * spec.horizon
    while state.iteration < config.iterations:
        if _converged(config, state.eval_history):
            break
        if not _chunk_fits(config, state, steps_per_chunk):
            break
        k = state.iteration + 1
        rows = []
        for _ in range(chunks_per_iter):
            if not _chunk_fits(config, state, steps_per_chunk):
                break
            scorer = None
            if state.reward is not None:
                if _fit_reward(config, state):
                    scorer = state.reward.score_batch
                    if config.relabel_replay:
                        state.td3.replay.relabel(scorer, config.reward_on)
                else:
                    scorer = _zero_scorer
            trajs, metrics = train_policy(
                state.td3, env, scorer, steps_per_chunk,
                rng=state.streams["noise"], env_rng=state.streams["env"],
                rule=rule, reward_on=config.reward_on,
            )
            state.demos = state.demos + trajs
            for m in metrics:
                state.episodes += 1
                rows.append({"iteration": k, "episode": state.episodes,
                             "env_return": m.env_return, "learned_return": m.learned_return,
                             "success": int(m.success), "steps": m.steps})
            state.chunks += 1
        stats = evaluate(state.td3.policy, env, config.eval_episodes, seed=state.eval_seed)
        stats.update(iteration=k, env_steps=state.td3.env_steps)
        state.eval_history.append(stats)
        log.info("iter %d steps %d success %.2f return %.1f", k, state.td3.env_steps,
                 stats["success_rate"], stats["mean_env_return"])

        save_demos(state.demos, art.demos_path)
        _write_csv(art.metrics_path, METRIC_COLUMNS, rows, append=True)
        _write_csv(art.eval_path, EVAL_COLUMNS,
                   [{"iteration": k, "env_steps": stats["env_steps"],
                     "mean_env_return": stats["mean_env_return"],
                     "std_env_return": stats["std"],
                     "success_rate": stats["success_rate"]}], append=True)
        if state.reward is not None:
            path = out / f"reward_iter{k}.json"
            save_reward(state.reward, path, OBS_LAYOUT)
            state.reward_paths.append(path)
            if config.write_heatmaps:
                goal = spec.cell_center(spec.cells("G")[0])
                heat = reward_heatmap(spec, state.reward.score_batch,
                                      config.heatmap_resolution, goal)
                hpath = out / f"heatmap_iter{k}.csv"
                save_csv(heat, hpath)
                state.heatmap_paths.append(hpath)
        ppath = out / f"policy_iter{k}.json"
        state.td3.save(ppath, iteration=k)
        state.policy_paths.append(ppath)
        state.iteration = k
        with open(ckpt, "wb") as fh:
            pickle.dump(state, fh)

    art.reward_checkpoints = list(state.reward_paths)
    art.policy_checkpoints = list(state.policy_paths)
    art.heatmaps = list(state.heatmap_paths)
    art.eval_history = list(state.eval_history)
    art.env_steps = state.td3.env_steps
    art.converged = _converged(config, state.eval_history)
    art.state = state
    return art


def _zero_scorer(obs):
    return np.zeros(len(obs))


def _converged(config, history) -> bool:
    p = config.converge_patience
    return len(history) >= p and all(
        h["success_rate"] >= config.converge_success for h in history[-p:]
    )


def steps_to_success(history, threshold: float = 0.5) -> float:
    """Env steps at the first evaluation with success rate >= threshold (inf if never)."""
    for h in history:
        if h["success_rate"] >= threshold:
            return h["env_steps"]
    return math.inf
