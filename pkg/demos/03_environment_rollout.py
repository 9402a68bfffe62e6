"""Environment rollout walkthrough.

Rolls the planned expert through the kinematic multi-arm environment,
printing the per-step rewards, and contrasts it with a random policy.  Shows
the observation contract: each arm sees a sequence of 107-dimensional arm
states, nearby arms first (sorted by decreasing base distance), itself last.
"""

import numpy as np

from multiarm.birrt import PlannerParams, decimate, plan, to_actions
from multiarm.env import (EnvConfig, MultiArmEnv, collect_episode,
                          expert_action_source)
from multiarm.kinematics import ArmModel
from multiarm.taskgen import STATIC, generate_task, task_world

arm = ArmModel.default()
task = generate_task(2, STATIC, np.random.default_rng(11), arm=arm)
cfg = EnvConfig()  # 2 cm / 0.1 rad success tolerance, 500-step cap
env = MultiArmEnv(arm, cfg)

obs = env.reset(task)
print(f"task with {task.k} arms; observation sequences per arm: "
      f"{[len(o) for o in obs]} states of width "
      f"{[len(s) for s in obs[0]]}")

# expert rollout
traj = plan(task_world(task, arm), task.q1, task.q2, PlannerParams(rng_seed=1))
seqs = to_actions(decimate(traj, 0.01), cap=0.5)
source = expert_action_source(seqs, cfg.action_scale)

obs = env.reset(task)
step = 0
print("\nexpert replay:")
while not env.done:
    obs, rewards, done, info = env.step(source(obs, env))
    step += 1
    if np.any(rewards != 0):
        print(f"  step {step:3d}: rewards {np.round(rewards, 3)}")
print(f"  finished after {step} steps; success = {env.success}")

# random policy for contrast
rng = np.random.default_rng(0)
env2 = MultiArmEnv(arm, cfg)
transitions, success = collect_episode(
    env2, task, lambda obs, env: rng.uniform(-1, 1, (env.k, 6)))
total = sum(t.reward for seq in transitions for t in seq)
print(f"\nrandom policy: {len(transitions[0])} steps, success = {success}, "
      f"summed reward {total:.3f} (collisions end the episode)")
