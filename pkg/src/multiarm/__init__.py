"""Decentralized multi-arm motion planning: kinematics, collision checking,
task generation, a centralized expert planner, a multi-agent reaching
environment, recurrent policy/value networks, SAC training with expert
demonstrations, and evaluation tooling."""

__version__ = "0.1.0"

from .kinematics import (ArmModel, JointLimitError, Pose, forward_kinematics,
                         jacobian, solve_ik, wrap_angle)
from .collision import (Capsule, CollisionReport, World, capsule_distance,
                        check_collision, is_collision_free,
                        segment_collision_free, segment_distances)
from .taskgen import (DYNAMIC, STATIC, Task, TaskDataset, generate_dataset,
                      generate_task, read_dataset, task_difficulty, task_world,
                      workspace_overlap, write_dataset)
from .birrt import (PlannerParams, PlanningError, Trajectory, decimate, plan,
                    read_expert_file, to_actions, write_expert_entry)
from .env import (ARM_STATE_DIM, EnvConfig, MultiArmEnv, Transition,
                  collect_episode, expert_action_source)
from .neural import (NetConfig, PolicyNet, QNet, load_checkpoint,
                     save_checkpoint)
from .trainer import (CURRICULUM, ReplayBuffer, SACConfig, SACTrainer,
                      behavior_clone, run_training)
from .eval_bench import (EvalReport, bench_planner, bench_policy_latency,
                         compare_ablations, evaluate)
