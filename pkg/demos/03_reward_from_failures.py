from pathlib import Path

import numpy as np

from twcrl.core import DemoSet
from twcrl.envs import MazeEnv, load_map, scripted_expert
from twcrl.envs.heatmap import region_means, reward_heatmap, save_pgm
from twcrl.pipeline import collect_rollouts
from twcrl.reward import RewardModel, label_dataset, train_reward
from twcrl.timeweight import TimeWeightParams

spacer = "_" * 60
out = Path("demo_out")
out.mkdir(exist_ok=True)

spec = load_map("trapmaze1")
env = MazeEnv(spec)
print(f"\n{spec.name}: {spec.shape[0]}x{spec.shape[1]} cells, traps at {spec.trap_cells}")

# successes come from the scripted expert, failures from an agent that
# heads for the nearest trap
successes = [scripted_expert(spec, seed) for seed in range(10)]


def reckless(obs):
    x, y = obs[:2]
    cx, cy = min(spec.trap_centers, key=lambda c: np.hypot(c[0] - x, c[1] - y))
    d = np.array([cx - x, cy - y])
    return np.clip(d / max(np.linalg.norm(d), 1e-9), -1, 1)


failures = collect_rollouts(reckless, env, 30, seed=1, noise_std=0.3)
demos = DemoSet(successes) + list(failures.failures)
print(f"{len(demos.successes)} successes, {len(demos.failures)} failures, "
      f"{demos.n_states} states")

print(spacer)

params = TimeWeightParams(alpha=2.0, horizon=spec.horizon)
data = label_dataset(demos, params)
print("\nOne labelled sample per visit. Absorbed tails count once, so a")
print("trajectory's T is the step it entered the goal or the trap.")
print(f"{len(data)} samples, {int(np.sum(np.abs(data.labels) > 0.5))} with |label| > 0.5")

model = RewardModel.create(4, (64, 64), params, seed=0)
train_reward(model, data, epochs=400, batch_size=256, seed=0)
print(f"final loss {model.training_log[-1][1]:.4f}")

print(spacer)

goal = spec.cell_center(spec.cells("G")[0])
heat = reward_heatmap(spec, model.score_batch, 48, goal)
means = region_means(spec, heat, goal)
print(f"\nmean score over the goal disc {means['goal']:+.3f}")
print(f"mean score over the trap discs {means['trap']:+.3f}")
save_pgm(heat, out / "trapmaze1_reward.pgm")
print(f"heatmap written to {out / 'trapmaze1_reward.pgm'} (walls are black)")
