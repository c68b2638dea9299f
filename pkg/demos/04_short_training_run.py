"""Three iterations of the reward/policy loop on TrapMaze-v1.

Far too short to solve the maze; it shows what a run writes and how the
learned reward and the evaluation numbers move. Full runs go through
``twcrl train --config run.json``.
"""

import csv

from twcrl.pipeline import RunConfig, run_twcrl

spacer = "_" * 60

config = RunConfig(map="trapmaze1", iterations=3, seed=0, eval_episodes=5,
                   out_dir="demo_out/trapmaze1_run")
print("\nsettings:", {k: v for k, v in config.to_dict().items()
                      if k in ("map", "alpha", "horizon", "reward_hidden", "iterations",
                               "rollouts_per_iteration", "reward_update_interval")})

art = run_twcrl(config)

print(spacer)
print("\nevaluation after each iteration (noise-free policy):")
for h in art.eval_history:
    print(f"  iteration {h['iteration']}: {h['env_steps']:6d} env steps, "
          f"success {h['success_rate']:.2f}, return {h['mean_env_return']:.1f}")

print(spacer)
with open(art.metrics_path) as fh:
    rows = list(csv.DictReader(fh))
print(f"\n{len(rows)} training episodes logged; the last three:")
for r in rows[-3:]:
    print(f"  episode {r['episode']}: env return {r['env_return']}, "
          f"learned return {float(r['learned_return']):+.3f}, success {r['success']}")

print(spacer)
print("\nfiles in", art.out_dir)
for p in sorted(art.out_dir.iterdir()):
    print("  ", p.name)
