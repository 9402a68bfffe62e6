"""Policy evaluation over task datasets (success rates bucketed by workspace
difficulty or target speed) and runtime benchmarks (policy inference latency,
planner wall time versus arm count)."""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .birrt import PlannerParams, plan
from .env import EnvConfig, MultiArmEnv
from .kinematics import ArmModel
from .neural import NetConfig, PolicyNet, collate_sequences
from .taskgen import DYNAMIC, STATIC, TaskDataset, task_world

# success is measured at the tightest tolerance regardless of training level
SUCCESS_POSITION_TOLERANCE = 0.02   # m
SUCCESS_ORIENTATION_TOLERANCE = 0.1  # rad

# workspace-overlap difficulty buckets for static tasks; the hard bucket is
# open-ended because overlap can approach 1 for tightly packed arms
STATIC_BUCKETS = ((0.0, 0.35, "easy"), (0.35, 0.45, "medium"), (0.45, 1.01, "hard"))
# target speed buckets (m/s) for dynamic tasks
DYNAMIC_BUCKETS = ((0.01, 0.05, "slow"), (0.05, 0.10, "medium"), (0.10, 0.15001, "fast"))


@dataclass
class EpisodeResult:
    task_id: int
    k: int
    mode: str
    difficulty: float
    target_speed: float | None
    success: bool
    steps: int
    collided: bool


@dataclass
class EvalReport:
    results: list
    mode: str

    @property
    def success_rate(self):
        if not self.results:
            return 0.0
        return sum(r.success for r in self.results) / len(self.results)

    def bucketed(self):
        """Success rate per difficulty bucket (static) or speed bucket
        (dynamic); buckets with no episodes are omitted."""
        buckets = STATIC_BUCKETS if self.mode == STATIC else DYNAMIC_BUCKETS
        out = {}
        for lo, hi, name in buckets:
            rows = [r for r in self.results
                    if lo <= (r.difficulty if self.mode == STATIC
                              else (r.target_speed or 0.0)) < hi]
            if rows:
                out[name] = {"n": len(rows),
                             "success_rate": sum(r.success for r in rows) / len(rows)}
        return out

    def by_arm_count(self):
        out = {}
        for r in self.results:
            out.setdefault(r.k, []).append(r.success)
        return {k: {"n": len(v), "success_rate": sum(v) / len(v)}
                for k, v in sorted(out.items())}

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["task_id", "k", "mode", "difficulty", "target_speed",
                        "success", "steps", "collided"])
            for r in self.results:
                w.writerow([r.task_id, r.k, r.mode, repr(r.difficulty),
                            "" if r.target_speed is None else repr(r.target_speed),
                            int(r.success), r.steps, int(r.collided)])

    def summary(self):
        return {
            "episodes": len(self.results),
            "success_rate": self.success_rate,
            "buckets": self.bucketed(),
            "by_arm_count": self.by_arm_count(),
        }

    def write_json(self, path):
        with open(path, "w") as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)


def policy_action_source(policy: PolicyNet, deterministic=True, rng=None):
    """Env action source driven by a policy network (deterministic by default:
    the tanh of the Gaussian mean)."""
    dtype = next(policy.parameters()).dtype
    if rng is None:
        rng = np.random.default_rng(0)

    def source(observations, env):
        padded, lengths = collate_sequences(observations, dtype=dtype)
        with torch.no_grad():
            mean, log_std = policy(padded, lengths)
            if deterministic:
                u = mean
            else:
                eps = torch.as_tensor(rng.standard_normal(mean.shape), dtype=dtype)
                u = mean + log_std.exp() * eps
            return torch.tanh(u).numpy()

    return source


def evaluate(policy: PolicyNet, dataset: TaskDataset, env_config: EnvConfig = None,
             arm: ArmModel = None, deterministic=True, seed=0,
             progress=None) -> EvalReport:
    """Run one episode per task; success means every arm was simultaneously
    within 2 cm / 0.1 rad of its target at some step (the start counts)."""
    arm = arm or ArmModel.default()
    base = env_config or EnvConfig()
    config = base.with_tolerances(SUCCESS_POSITION_TOLERANCE,
                                  SUCCESS_ORIENTATION_TOLERANCE)
    env = MultiArmEnv(arm, config)
    source = policy_action_source(policy, deterministic=deterministic,
                                  rng=np.random.default_rng(seed))
    results = []
    for n, task in enumerate(dataset.tasks):
        obs = env.reset(task)
        # reaching may already hold at step 0
        if all(env.reached):
            env.all_reached_ever = True
        while not env.done:
            actions = np.clip(source(obs, env), -1.0, 1.0)
            obs, _, _, _ = env.step(actions)
        results.append(EpisodeResult(
            task_id=task.id, k=task.k, mode=task.mode, difficulty=task.difficulty,
            target_speed=task.target_speed, success=env.success,
            steps=env.step_count, collided=env.collided))
        if progress is not None:
            progress(n + 1, len(dataset.tasks))
    return EvalReport(results=results, mode=dataset.mode)


# ---------------------------------------------------------------------------
# runtime benchmarks

def _timing_stats(samples_ms):
    s = sorted(samples_ms)
    return {
        "n": len(s),
        "median_ms": statistics.median(s),
        "mean_ms": statistics.fmean(s),
        "iqr_ms": (np.percentile(s, 75) - np.percentile(s, 25)) if len(s) > 1 else 0.0,
        "min_ms": s[0],
        "max_ms": s[-1],
    }


def bench_policy_latency(policy: PolicyNet = None, sequence_length=4, reps=50,
                         warmup=5, seed=0):
    """Single-thread wall-clock latency of one policy forward pass on one
    observation sequence. Warm-up repetitions are discarded."""
    if reps < 20:
        raise ValueError("need at least 20 timed repetitions")
    old_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        if policy is None:
            policy = PolicyNet(NetConfig()).to(torch.float32)
        dtype = next(policy.parameters()).dtype
        dim = policy.cfg.state_dim
        rng = np.random.default_rng(seed)
        seq = [rng.standard_normal(dim) for _ in range(sequence_length)]
        padded, lengths = collate_sequences([seq], dtype=dtype)
        samples = []
        with torch.no_grad():
            for i in range(warmup + reps):
                t0 = time.perf_counter()
                mean, _ = policy(padded, lengths)
                torch.tanh(mean)
                elapsed = (time.perf_counter() - t0) * 1000.0
                if i >= warmup:
                    samples.append(elapsed)
        stats = _timing_stats(samples)
        stats["sequence_length"] = sequence_length
        return stats
    finally:
        torch.set_num_threads(old_threads)


def bench_planner(dataset: TaskDataset, arm: ArmModel = None,
                  params: PlannerParams = None, reps_per_task=1):
    """BiRRT wall time grouped by arm count. Returns {k: timing stats dict}
    plus per-k success counts."""
    arm = arm or ArmModel.default()
    by_k = {}
    success = {}
    for task in dataset.tasks:
        world = task_world(task, arm)
        for r in range(reps_per_task):
            p = params or PlannerParams(rng_seed=task.id * 1000 + r)
            t0 = time.perf_counter()
            traj = plan(world, task.q1, task.q2, p)
            elapsed = (time.perf_counter() - t0) * 1000.0
            by_k.setdefault(task.k, []).append(elapsed)
            success.setdefault(task.k, []).append(traj is not None)
    out = {}
    for k in sorted(by_k):
        stats = _timing_stats(by_k[k])
        stats["success_rate"] = sum(success[k]) / len(success[k])
        out[k] = stats
    return out


# ---------------------------------------------------------------------------
# ablation comparison

def compare_ablations(checkpoints: dict, dataset: TaskDataset,
                      env_config: EnvConfig = None, arm: ArmModel = None,
                      net_config: NetConfig = None, seed=0):
    """Evaluate one checkpoint per named variant on the same dataset.

    checkpoints: name -> path; missing paths yield a row marked absent rather
    than an error. Returns {name: summary-or-absent}.
    """
    from .neural import load_checkpoint, peek_checkpoint_meta
    import os
    rows = {}
    for name in sorted(checkpoints):
        path = checkpoints[name]
        if path is None or not os.path.exists(path):
            rows[name] = {"absent": True, "path": path}
            continue
        cfg, dtype = net_config, torch.float64
        if cfg is None:
            header = peek_checkpoint_meta(path)
            net = header.get("net")
            cfg = NetConfig(state_dim=net["state_dim"], hidden_dim=net["hidden_dim"],
                            mlp_dims=tuple(net["mlp_dims"]),
                            action_dim=net["action_dim"]) if net else NetConfig()
            if header.get("dtype") == "float32":
                dtype = torch.float32
        policy = PolicyNet(cfg).to(dtype)
        meta = load_checkpoint(path, {"policy": policy})
        report = evaluate(policy, dataset, env_config=env_config, arm=arm, seed=seed)
        rows[name] = {"absent": False, "path": path, "meta": meta,
                      **report.summary()}
    return rows


def write_ablation_csv(rows: dict, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "absent", "episodes", "success_rate"])
        for name in sorted(rows):
            r = rows[name]
            if r.get("absent"):
                w.writerow([name, 1, "", ""])
            else:
                w.writerow([name, 0, r["episodes"], repr(r["success_rate"])])
