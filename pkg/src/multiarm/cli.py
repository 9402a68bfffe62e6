"""Command-line entry points: task generation, expert planning, training,
evaluation, benchmarks, single-episode rollouts, and ablation comparison.

Option precedence: command-line flags > --config JSON file > built-in
defaults. Every command that produces outputs writes a run-config JSON next
to them recording the resolved options.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .birrt import (PlannerParams, Trajectory, plan, read_expert_file,
                    write_expert_entry)
from .env import EnvConfig, MultiArmEnv, SELFISH, TEAM
from .kinematics import ArmModel
from .taskgen import (DYNAMIC, STATIC, TaskDataset, generate_dataset,
                      read_dataset, task_world, write_dataset)


class CliError(Exception):
    """User-facing input error; exits with status 2."""


def _load_config_file(path):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(f"cannot read config file {path}: {e}")
    if not isinstance(cfg, dict):
        raise CliError(f"config file {path} must contain a JSON object")
    return cfg


def _resolve(args, parser):
    """Apply --config file values for options the command line left at their
    defaults (flags win over file values, file values win over defaults)."""
    if not getattr(args, "config", None):
        return args
    cfg = _load_config_file(args.config)
    explicit = set()
    argv = getattr(args, "_argv", sys.argv[1:])
    for a in parser._actions:
        if any(opt in argv for opt in a.option_strings):
            explicit.add(a.dest)
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise CliError(f"unknown option {key!r} in config file")
        if dest not in explicit:
            setattr(args, dest, value)
    return args


def _write_run_config(out_path, command, args):
    """Record the resolved options beside the output."""
    rec = {"command": command, "version": __version__,
           "options": {k: v for k, v in sorted(vars(args).items())
                       if k not in ("func", "parser") and not k.startswith("_")}}
    directory = os.path.dirname(os.path.abspath(out_path)) or "."
    stem = os.path.splitext(os.path.basename(out_path))[0]
    path = os.path.join(directory, f"{stem}.runconfig.json")
    with open(path, "w") as f:
        json.dump(rec, f, indent=2, sort_keys=True, default=str)
    return path


def _read_tasks(path):
    if not os.path.exists(path):
        raise CliError(f"task file not found: {path}")
    from .taskgen import DatasetParseError
    try:
        return read_dataset(path)
    except DatasetParseError as e:
        raise CliError(f"malformed task file {path}: {e}")


def _progress(label):
    def cb(done, total):
        if done == total or done % 10 == 0:
            print(f"{label}: {done}/{total}", flush=True)
    return cb


# ---------------------------------------------------------------------------
# gen-tasks

def cmd_gen_tasks(args, parser):
    args = _resolve(args, parser)
    if args.count < 1:
        raise CliError("--count must be >= 1")
    try:
        k_values = [int(v) for v in str(args.arms).split(",")]
    except ValueError:
        raise CliError(f"--arms must be a comma list of integers, got {args.arms!r}")
    if any(not 1 <= k <= 16 for k in k_values):
        raise CliError("arm counts must be in 1..16")
    if args.mode not in (STATIC, DYNAMIC):
        raise CliError(f"--mode must be {STATIC} or {DYNAMIC}")
    dataset = generate_dataset(k_values, args.count, args.mode, args.seed,
                               progress=_progress("tasks"))
    write_dataset(dataset, args.out)
    _write_run_config(args.out, "gen-tasks", args)
    print(f"wrote {len(dataset.tasks)} tasks to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# gen-expert

def _plan_one(task_dict, seed, params_dict):
    """Worker: plan one task (module-level for process pools)."""
    from .taskgen import Task
    task = Task.from_dict(task_dict)
    world = task_world(task, ArmModel.default())
    params = PlannerParams(rng_seed=seed, **params_dict)
    try:
        traj = plan(world, task.q1, task.q2, params)
    except Exception:
        traj = None
    return task.id, None if traj is None else [w.tolist() for w in traj.waypoints], seed


def cmd_gen_expert(args, parser):
    args = _resolve(args, parser)
    dataset = _read_tasks(args.tasks)
    done_ids = set()
    if os.path.exists(args.out) and not args.overwrite:
        done_ids = set(read_expert_file(args.out))
        print(f"resuming: {len(done_ids)} entries already in {args.out}")
    pending = [t for t in dataset.tasks if t.id not in done_ids]
    params_dict = {"max_iterations": args.iterations}
    mode = "a" if done_ids else "w"
    planned = failed = 0
    with open(args.out, mode) as f:
        jobs = [(t.to_dict(), args.seed + t.id, params_dict) for t in pending]
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                results = pool.map(_plan_one, *zip(*jobs)) if jobs else []
                for task_id, waypoints, seed in results:
                    traj = None if waypoints is None else Trajectory(
                        [np.array(w) for w in waypoints])
                    write_expert_entry(f, task_id, traj, seed)
                    planned += traj is not None
                    failed += traj is None
                    f.flush()
        else:
            for job in jobs:
                task_id, waypoints, seed = _plan_one(*job)
                traj = None if waypoints is None else Trajectory(
                    [np.array(w) for w in waypoints])
                write_expert_entry(f, task_id, traj, seed)
                planned += traj is not None
                failed += traj is None
                f.flush()
    _write_run_config(args.out, "gen-expert", args)
    print(f"planned {planned}, failed {failed}, skipped {len(done_ids)} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# train

def cmd_train(args, parser):
    args = _resolve(args, parser)
    import torch
    from .neural import NetConfig
    from .trainer import SACConfig, run_training
    try:
        mlp_dims = tuple(int(v) for v in str(args.mlp_dims).split(","))
    except ValueError:
        raise CliError(f"--mlp-dims must be a comma list of integers, got {args.mlp_dims!r}")
    net_config = NetConfig(hidden_dim=args.hidden_dim, mlp_dims=mlp_dims)
    dataset = _read_tasks(args.tasks)
    experts = {}
    if args.expert:
        if not os.path.exists(args.expert):
            raise CliError(f"expert file not found: {args.expert}")
        experts = {tid: tr for tid, tr in read_expert_file(args.expert).items()
                   if tr is not None}
    use_expert = not args.no_expert
    if use_expert and not experts:
        raise CliError("training requires --expert demonstrations; "
                       "pass --no-expert to run the no-expert ablation")
    scheme = SELFISH if args.selfish else TEAM
    env_config = EnvConfig(max_steps=args.max_episode_steps,
                           reward_scheme=scheme,
                           observe_others=not args.individualistic)
    sac = SACConfig(batch_size=args.batch_size,
                    warmup_steps=args.warmup_steps,
                    replay_capacity=args.replay_capacity,
                    updates_per_env_step=args.updates_per_env_step,
                    target_entropy=args.target_entropy,
                    temperature_lr=args.temperature_lr,
                    initial_temperature=args.initial_temperature,
                    demo_anchor_weight=0.0 if args.no_expert else args.demo_anchor_weight,
                    seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    _write_run_config(os.path.join(args.out, "train.json"), "train", args)
    summary = run_training(
        dataset, experts, sac, env_config, args.out, seed=args.seed,
        use_expert=use_expert, max_env_steps=args.max_env_steps,
        max_episodes=args.max_episodes,
        stop_after_graduations=args.stop_after_graduations,
        net_config=net_config,
        dtype=torch.float64 if args.float64 else torch.float32,
        log_fn=(lambda ep, steps, level, trailing:
                print(f"episode {ep} steps {steps} level {level} "
                      f"trailing {trailing:.2f}", flush=True))
        if args.verbose else None)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# eval

def _load_policy(path):
    import torch
    from .neural import NetConfig, PolicyNet, load_checkpoint, peek_checkpoint_meta
    if not os.path.exists(path):
        raise CliError(f"checkpoint not found: {path}")
    try:
        meta = peek_checkpoint_meta(path)
    except (ValueError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CliError(f"cannot load checkpoint {path}: {e}")
    net = meta.get("net")
    cfg = NetConfig(state_dim=net["state_dim"], hidden_dim=net["hidden_dim"],
                    mlp_dims=tuple(net["mlp_dims"]),
                    action_dim=net["action_dim"]) if net else NetConfig()
    dtype = torch.float32 if meta.get("dtype") == "float32" else torch.float64
    policy = PolicyNet(cfg).to(dtype)
    try:
        meta = load_checkpoint(path, {"policy": policy})
    except ValueError as e:
        raise CliError(f"cannot load checkpoint {path}: {e}")
    return policy, meta


def cmd_eval(args, parser):
    args = _resolve(args, parser)
    from .eval_bench import evaluate
    dataset = _read_tasks(args.tasks)
    policy, meta = _load_policy(args.checkpoint)
    report = evaluate(policy, dataset,
                      env_config=EnvConfig(max_steps=args.max_episode_steps),
                      seed=args.seed, progress=_progress("eval"))
    report.write_csv(args.out)
    report.write_json(os.path.splitext(args.out)[0] + ".json")
    _write_run_config(args.out, "eval", args)
    print(json.dumps(report.summary(), indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# bench

def cmd_bench(args, parser):
    args = _resolve(args, parser)
    from .eval_bench import bench_planner, bench_policy_latency
    out = {}
    if args.checkpoint:
        policy, _ = _load_policy(args.checkpoint)
        import torch
        policy = policy.to(torch.float32)
    else:
        policy = None
    out["policy_latency"] = bench_policy_latency(policy, reps=args.reps)
    if args.tasks:
        dataset = _read_tasks(args.tasks)
        out["planner"] = bench_planner(dataset)
    with open(args.out, "w") as f:
        json.dump(out, f, indent=2, sort_keys=True)
    _write_run_config(args.out, "bench", args)
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# rollout

def cmd_rollout(args, parser):
    args = _resolve(args, parser)
    from .eval_bench import policy_action_source
    dataset = _read_tasks(args.tasks)
    by_id = {t.id: t for t in dataset.tasks}
    if args.task_id not in by_id:
        raise CliError(f"task id {args.task_id} not in {args.tasks}")
    task = by_id[args.task_id]
    env = MultiArmEnv(None, EnvConfig(max_steps=args.max_episode_steps))
    if args.checkpoint:
        policy, _ = _load_policy(args.checkpoint)
        source = policy_action_source(policy, deterministic=True)
    elif args.expert:
        from .trainer import expert_actions_for
        experts = read_expert_file(args.expert)
        traj = experts.get(task.id)
        if traj is None:
            raise CliError(f"no expert trajectory for task {task.id} in {args.expert}")
        source = expert_actions_for(traj, env.config.action_scale)
    else:
        raise CliError("rollout needs --checkpoint or --expert")
    obs = env.reset(task, record_log=True)
    while not env.done:
        actions = np.clip(source(obs, env), -1.0, 1.0)
        obs, _, _, _ = env.step(actions)
    env.write_episode_log(args.out)
    _write_run_config(args.out, "rollout", args)
    print(f"task {task.id}: success={env.success} steps={env.step_count} "
          f"collided={env.collided} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# ablate

def cmd_ablate(args, parser):
    args = _resolve(args, parser)
    from .eval_bench import compare_ablations, write_ablation_csv
    dataset = _read_tasks(args.tasks)
    checkpoints = {}
    for spec in args.variant:
        if "=" not in spec:
            raise CliError(f"--variant must be name=path, got {spec!r}")
        name, path = spec.split("=", 1)
        checkpoints[name] = path or None
    if not checkpoints:
        raise CliError("at least one --variant name=path is required")
    rows = compare_ablations(checkpoints, dataset,
                             env_config=EnvConfig(max_steps=args.max_episode_steps),
                             seed=args.seed)
    write_ablation_csv(rows, args.out)
    _write_run_config(args.out, "ablate", args)
    print(json.dumps(rows, indent=2, sort_keys=True, default=str))
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="multiarm",
        description="Decentralized multi-arm motion planning toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None,
                       help="JSON file of option defaults (flags win)")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen-tasks", help="generate a task dataset")
    common(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--arms", default="1,2,3,4",
                   help="comma list of arm counts, cycled across tasks")
    p.add_argument("--mode", default=STATIC, choices=(STATIC, DYNAMIC))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_tasks, parser=p)

    p = sub.add_parser("gen-expert", help="plan expert trajectories (resumable)")
    common(p)
    p.add_argument("--tasks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, default=4000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--overwrite", action="store_true",
                   help="replan everything instead of resuming")
    p.set_defaults(func=cmd_gen_expert, parser=p)

    p = sub.add_parser("train", help="train a policy with SAC")
    common(p)
    p.add_argument("--tasks", required=True)
    p.add_argument("--expert", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-expert", action="store_true")
    p.add_argument("--selfish", action="store_true",
                   help="individual-only rewards (no team bonus)")
    p.add_argument("--individualistic", action="store_true",
                   help="arms observe only themselves")
    p.add_argument("--batch-size", type=int, default=4096)
    p.add_argument("--warmup-steps", type=int, default=20000)
    p.add_argument("--replay-capacity", type=int, default=50000)
    p.add_argument("--updates-per-env-step", type=float, default=1.0)
    p.add_argument("--target-entropy", type=float, default=-6.0)
    p.add_argument("--temperature-lr", type=float, default=0.0003)
    p.add_argument("--initial-temperature", type=float, default=1.0)
    p.add_argument("--demo-anchor-weight", type=float, default=0.0,
                   help="auxiliary actor penalty toward demonstrated actions "
                        "on expert-sourced replay samples (0 = pure SAC)")
    p.add_argument("--max-env-steps", type=int, default=200000)
    p.add_argument("--max-episodes", type=int, default=None)
    p.add_argument("--max-episode-steps", type=int, default=500)
    p.add_argument("--stop-after-graduations", type=int, default=None)
    p.add_argument("--float64", action="store_true")
    p.add_argument("--hidden-dim", type=int, default=256,
                   help="LSTM hidden width (reduce for desk-scale smoke runs)")
    p.add_argument("--mlp-dims", default="128,64")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train, parser=p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(p)
    p.add_argument("--tasks", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-episode-steps", type=int, default=500)
    p.set_defaults(func=cmd_eval, parser=p)

    p = sub.add_parser("bench", help="runtime benchmarks")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--tasks", default=None,
                   help="also benchmark the planner on these tasks")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench, parser=p)

    p = sub.add_parser("rollout", help="roll one episode and log it")
    common(p)
    p.add_argument("--tasks", required=True)
    p.add_argument("--task-id", type=int, required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--expert", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--max-episode-steps", type=int, default=500)
    p.set_defaults(func=cmd_rollout, parser=p)

    p = sub.add_parser("ablate", help="compare ablation checkpoints")
    common(p)
    p.add_argument("--tasks", required=True)
    p.add_argument("--variant", action="append", default=[],
                   metavar="NAME=PATH")
    p.add_argument("--out", required=True)
    p.add_argument("--max-episode-steps", type=int, default=500)
    p.set_defaults(func=cmd_ablate, parser=p)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = list(argv) if argv is not None else sys.argv[1:]
    try:
        return args.func(args, args.parser)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
