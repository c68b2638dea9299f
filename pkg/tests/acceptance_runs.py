"""Long training runs behind the end-to-end acceptance checks.

Each run is summarised into a small JSON file under ``results/acceptance``.
The file name hashes the run configuration together with the package
source, so editing the library invalidates every cached summary and the
next test session retrains from scratch. ``python3 tests/acceptance_runs.py``
fills the cache ahead of a test session.
"""

import hashlib
import json
import math
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from twcrl.core import Outcome, load_demos
from twcrl.envs import MazeEnv, load_map
from twcrl.envs.heatmap import load_csv, region_means
from twcrl.pipeline import RunConfig, evaluate, run_twcrl
from twcrl.reward import absorbed_length, load_reward
from twcrl.td3 import ActorPolicy, load_actor

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / "results" / "acceptance"
SEEDS = (0, 1, 2)
BUDGET = 200_000
THREE_CELL_EPISODES = 20


def source_digest() -> str:
    h = hashlib.sha256()
    for path in sorted((ROOT / "src" / "twcrl").rglob("*")):
        if path.is_file() and path.suffix in (".py", ".map"):
            h.update(path.relative_to(ROOT).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()[:16]


def configs() -> dict:
    """Every long run the acceptance checks need, by name."""
    base = dict(iterations=BUDGET // 6000 + 1, max_env_steps=BUDGET)
    runs = {}
    for seed in SEEDS:
        runs[f"umaze-twcrl-{seed}"] = RunConfig(map="umaze", seed=seed, **base)
        runs[f"umaze-vanilla-{seed}"] = RunConfig(map="umaze", seed=seed, vanilla_td3=True, **base)
        runs[f"trap-twcrl-{seed}"] = RunConfig(map="trapmaze1", seed=seed, **base)
        runs[f"trap-constant-{seed}"] = RunConfig(map="trapmaze1", seed=seed,
                                                  constant_labels=True, **base)
    return runs


def late_contrast(out: Path, config: RunConfig) -> float:
    """Mean score on the last tenth of successes minus that of failures."""
    model = load_reward(sorted(out.glob("reward_iter*.json"),
                               key=lambda p: int(p.stem[len("reward_iter"):]))[-1])
    late = {Outcome.SUCCESS: [], Outcome.FAILURE: []}
    for traj in load_demos(out / "demos.jsonl"):
        T = absorbed_length(traj, config.absorb_tol) if config.collapse_absorbed else len(traj)
        start = math.ceil(0.9 * T)
        late[traj.outcome].append(traj.states[start:T + 1])
    if not late[Outcome.SUCCESS] or not late[Outcome.FAILURE]:
        return math.nan
    succ = model.score_batch(np.concatenate(late[Outcome.SUCCESS])).mean()
    fail = model.score_batch(np.concatenate(late[Outcome.FAILURE])).mean()
    return float(succ - fail)


def summarise(art, config: RunConfig, seconds: float) -> dict:
    out = art.out_dir
    settings = config.to_dict()
    settings.pop("out_dir")
    summary = {
        "config": settings,
        "seconds": seconds,
        "env_steps": art.env_steps,
        "eval_history": art.eval_history,
    }
    if art.policy_checkpoints:
        spec = load_map(config.map, goal_cells_mode="three", horizon=config.horizon)
        policy = ActorPolicy(load_actor(art.policy_checkpoints[-1]))
        summary["three_cell"] = evaluate(policy, MazeEnv(spec), THREE_CELL_EPISODES,
                                         seed=10_000 + config.seed)
    if art.heatmaps:
        spec = load_map(config.map)
        goal = spec.cell_center(spec.cells("G")[0])
        summary["regions"] = region_means(spec, load_csv(art.heatmaps[-1]), goal)
        summary["late_contrast"] = late_contrast(out, config)
    return summary


def cache_path(name: str, config: RunConfig) -> Path:
    blob = json.dumps(config.to_dict(), sort_keys=True) + source_digest()
    return CACHE / f"{name}-{hashlib.sha256(blob.encode()).hexdigest()[:12]}.json"


def result(name: str) -> dict:
    """Cached summary of the named run, training it first if needed."""
    config = configs()[name]
    path = cache_path(name, config)
    if path.exists():
        return json.loads(path.read_text())
    work = Path(tempfile.mkdtemp(prefix=f"twcrl-{name}-"))
    try:
        config.out_dir = str(work)
        start = time.perf_counter()
        art = run_twcrl(config)
        summary = summarise(art, config, time.perf_counter() - start)
    finally:
        shutil.rmtree(work, ignore_errors=True)
    config.out_dir = RunConfig.out_dir
    CACHE.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=1))
    return summary


if __name__ == "__main__":
    for name in sys.argv[1:] or configs():
        r = result(name)
        rates = [h["success_rate"] for h in r["eval_history"]]
        print(f"{name}: {r['seconds']:.0f}s best success {max(rates, default=0):.2f}", flush=True)
