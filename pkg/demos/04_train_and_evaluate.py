"""Miniature end-to-end training and evaluation run.

Generates a couple of single-arm tasks, plans their expert demonstrations,
runs a short SAC training loop (deliberately tiny so the script finishes in
about a minute), and evaluates the resulting checkpoint.  For a run that
actually learns the tasks, see the training recipe in the README.
"""

import tempfile

import numpy as np
import torch

from multiarm.birrt import PlannerParams, plan
from multiarm.env import EnvConfig
from multiarm.eval_bench import evaluate
from multiarm.kinematics import ArmModel
from multiarm.neural import NetConfig, PolicyNet, load_checkpoint
from multiarm.taskgen import STATIC, TaskDataset, generate_task, task_world
from multiarm.trainer import SACConfig, run_training

arm = ArmModel.default()
tasks = [generate_task(1, STATIC, np.random.default_rng([21, i]), arm=arm,
                       task_id=i) for i in range(2)]
dataset = TaskDataset(tasks=tasks, mode=STATIC, generator_seed=21)
experts = {t.id: plan(task_world(t, arm), t.q1, t.q2,
                      PlannerParams(rng_seed=t.id)) for t in tasks}
print(f"{len(tasks)} tasks, expert paths of "
      f"{[len(experts[t.id].waypoints) for t in tasks]} waypoints")

net = NetConfig(hidden_dim=16, mlp_dims=(16, 8))
with tempfile.TemporaryDirectory() as out:
    summary = run_training(
        dataset, experts,
        SACConfig(batch_size=32, warmup_steps=50, replay_capacity=2000,
                  updates_per_env_step=0.1, seed=0),
        EnvConfig(max_steps=30), out, seed=0, arm=arm, net_config=net,
        dtype=torch.float64, max_episodes=25,
        log_fn=lambda ep, steps, level, trailing:
            ep % 5 == 0 and print(f"  episode {ep:3d}  env steps {steps:5d}  "
                                  f"level {level}  trailing {trailing:.2f}"))
    print(f"\ntraining summary: {summary['episodes']} episodes, "
          f"{summary['env_steps']} env steps, "
          f"{summary['expert_injections']} expert injections")

    policy = PolicyNet(net).to(torch.float64)
    load_checkpoint(summary["checkpoint"], {"policy": policy})
    report = evaluate(policy, dataset, EnvConfig(max_steps=30), arm=arm)
    print(f"evaluation at 2 cm / 0.1 rad: success rate "
          f"{report.success_rate:.2f} over {len(report.results)} episodes "
          f"(an untrained-scale net is not expected to succeed)")
