"""``twcrl`` command line: train, demo-gen, heatmap, validate-tw, trap-check, eval.

Exit status is 0 on success, 1 when the input is invalid and 2 when a run
fails. Heavy modules are imported after ``--threads`` has been applied to
the BLAS thread-count variables.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p, out_help, seed_default=0):
    p.add_argument("--seed", type=int, default=seed_default, help="master seed")
    p.add_argument("--out", help=out_help)
    p.add_argument("--threads", type=int, default=1,
                   help="BLAS threads (1 forces serial mode)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="twcrl", description="Time-weighted contrastive reward learning.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="run the reward/policy loop from a JSON RunConfig")
    p.add_argument("--config", required=True, help="RunConfig JSON file")
    p.add_argument("--paper-hparams", action="store_true",
                   help="use full-size network and batch settings as defaults")
    p.add_argument("--resume", action="store_true", help="continue from checkpoint.pkl")
    _common(p, "output directory (overrides out_dir)", seed_default=None)

    p = sub.add_parser("demo-gen", help="write scripted expert demonstrations")
    p.add_argument("--map", required=True, help="built-in map name or .map file")
    p.add_argument("--n", type=int, default=5, help="number of demonstrations")
    p.add_argument("--goal-mode", default="one", choices=["one", "three", "any"])
    p.add_argument("--horizon", type=int, default=300)
    _common(p, "output JSON-lines file (default demos.jsonl)")

    p = sub.add_parser("heatmap", help="export a reward surface as CSV or PGM")
    p.add_argument("--map", required=True)
    p.add_argument("--reward", required=True, help="reward checkpoint JSON")
    p.add_argument("--res", type=int, default=64, help="lattice resolution")
    p.add_argument("--goal", type=float, nargs=2, metavar=("GX", "GY"),
                   help="goal position (default: centre of the G cell)")
    _common(p, "output file; .pgm writes an image, anything else CSV")

    p = sub.add_parser("validate-tw", help="tabulate the time weights against their oracles")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--samples", type=int, default=100_000, help="Monte-Carlo samples")
    p.add_argument("--csv", help="also write the table as CSV")
    _common(p, "write the table as CSV (same as --csv)")

    p = sub.add_parser("trap-check", help="compute and verify the trap set of a tabular MDP")
    p.add_argument("--mdp", required=True, help="TabularMDP JSON file")
    _common(p, "write the report as JSON")

    p = sub.add_parser("eval", help="evaluate a saved policy without exploration noise")
    p.add_argument("--map", required=True)
    p.add_argument("--policy", required=True, help="policy checkpoint JSON")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--goal-mode", default="one", choices=["one", "three", "any"])
    p.add_argument("--horizon", type=int, default=300)
    _common(p, "write the statistics as JSON")
    return parser


def _cmd_train(args):
    from .pipeline import RunConfig, run_twcrl

    path = Path(args.config)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out:
        data["out_dir"] = args.out
    config = RunConfig.full_scale(**data) if args.paper_hparams else RunConfig.from_dict(data)
    art = run_twcrl(config, resume=args.resume)
    for h in art.eval_history:
        print(f"iteration {h['iteration']}: steps {h['env_steps']} "
              f"success {h['success_rate']:.2f} return {h['mean_env_return']:.1f}")
    print(f"artifacts in {art.out_dir}")


def _cmd_demo_gen(args):
    import numpy as np

    from .core import DemoSet, save_demos
    from .envs import load_map, scripted_expert

    if args.n < 1:
        raise ValueError("--n must be >= 1")
    spec = load_map(args.map, goal_cells_mode=args.goal_mode, horizon=args.horizon)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed).spawn(5)[4])
    demos = DemoSet([scripted_expert(spec, int(rng.integers(2**63))) for _ in range(args.n)])
    out = args.out or "demos.jsonl"
    save_demos(demos, out)
    print(f"wrote {len(demos)} demonstrations to {out}")


def _cmd_heatmap(args):
    from .envs import load_map
    from .envs.heatmap import region_means, reward_heatmap, save_csv, save_pgm
    from .reward import load_reward

    spec = load_map(args.map)
    model = load_reward(args.reward)
    goal = tuple(args.goal) if args.goal else spec.cell_center(spec.cells("G")[0])
    heat = reward_heatmap(spec, model.score_batch, args.res, goal)
    out = args.out or "heatmap.csv"
    if out.endswith(".pgm"):
        save_pgm(heat, out)
    else:
        save_csv(heat, out)
    means = region_means(spec, heat, goal)
    print(f"goal mean {means['goal']:.4f} trap mean {means['trap']:.4f}; wrote {out}")


def _cmd_validate_tw(args):
    from .timeweight import (
        TimeWeightParams,
        closed_form_constant_k,
        divergence_table,
        mc_constant_k_conditional,
    )

    p = TimeWeightParams(args.alpha, args.horizon)
    rows = divergence_table(p)
    print(f"{'t':>6} {'f':>12} {'w':>12} {'exact':>12} {'|delta|':>10}")
    for r in rows:
        print(f"{r['t']:>6d} {r['f']:>12.6g} {r['w']:>12.6g} {r['exact']:>12.6g} "
              f"{r['delta']:>10.2e}")
    w = [r["w"] for r in rows]
    ok = w[0] == 0.0 and w[-1] == 1.0 and all(a <= b for a, b in zip(w, w[1:]))
    print(f"endpoints and monotonicity: {'ok' if ok else 'FAILED'}")
    approx = [r["delta"] for r in rows if r["fT"] >= 40]
    worst = max(approx) if approx else 0.0
    print(f"max |delta| where f*T >= 40: {worst:.3e} over {len(approx)} steps")
    k, t = 0.05, min(args.horizon, 20)
    est, se = mc_constant_k_conditional(k, t, args.horizon, args.samples, seed=args.seed)
    ref = closed_form_constant_k(k, t, args.horizon)
    z = abs(est - ref) / se if se > 0 else 0.0
    print(f"constant-k oracle (k={k}, t={t}): mc {est:.6f} +- {se:.1e}, "
          f"closed form {ref:.6f}, {z:.2f} s.e.")
    for dest in {args.csv, args.out} - {None}:
        import csv

        with open(dest, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["t", "f", "w", "exact", "delta"],
                                    extrasaction="ignore")
            writer.writeheader()
            writer.writerows(rows)
    if not ok:
        raise RuntimeError("time-weight invariants violated")


def _cmd_trap_check(args):
    from .core import TabularMDP
    from .traps import brute_force_trap_set, compute_trap_set, verify_trap_report

    mdp = TabularMDP.load(args.mdp)
    report = compute_trap_set(mdp)
    oracle = brute_force_trap_set(mdp)
    problems = verify_trap_report(mdp, report)
    if report.trap_states != oracle.trap_states:
        problems.append("fixed point disagrees with reachability search")
    names = ", ".join(f"s{s}" for s in sorted(report.trap_states))
    print(f"trap states: {{{names}}}")
    print(f"sweeps: {report.iterations}")
    print("verification: " + ("ok" if not problems else "; ".join(problems)))
    if args.out:
        Path(args.out).write_text(json.dumps({
            "trap_states": sorted(report.trap_states),
            "iterations": report.iterations,
            "verified": not problems,
            "problems": problems,
        }), encoding="utf-8")
    if problems:
        raise RuntimeError("trap set verification failed")


def _cmd_eval(args):
    from .envs import MazeEnv, load_map
    from .pipeline import evaluate
    from .td3 import ActorPolicy, load_actor

    spec = load_map(args.map, goal_cells_mode=args.goal_mode, horizon=args.horizon)
    actor = load_actor(args.policy)
    stats = evaluate(ActorPolicy(actor), MazeEnv(spec), args.episodes, seed=args.seed)
    print(f"success rate {stats['success_rate']:.3f}  mean return "
          f"{stats['mean_env_return']:.2f} +- {stats['std']:.2f}")
    if args.out:
        Path(args.out).write_text(json.dumps(stats), encoding="utf-8")


COMMANDS = {
    "train": _cmd_train,
    "demo-gen": _cmd_demo_gen,
    "heatmap": _cmd_heatmap,
    "validate-tw": _cmd_validate_tw,
    "trap-check": _cmd_trap_check,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    if "numpy" not in sys.modules:
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)

    from .errors import ExpertStuck, OptimDiverged, TwcrlError

    try:
        COMMANDS[args.command](args)
    except (OptimDiverged, ExpertStuck, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (TwcrlError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
