"""Multi-arm reaching environment with kinematic stepping.

Each arm is an agent: actions are delta-joint commands in [-1, 1] scaled by
action_scale, observations are distance-sorted sequences of 107-dim arm
states (self last), and rewards follow the team / individual / collision
scheme. Motion between configurations is validated by a swept collision
check so fast actions cannot tunnel through other arms.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .collision import World, check_collision
from .kinematics import ArmModel, clamp_to_limits, forward_kinematics, quat_angle
from .taskgen import DEFAULT_DT, DYNAMIC, STATIC, Task, dynamic_target, static_targets, task_world

ARM_STATE_DIM = 107
TEAM_REWARD = 1.0
INDIVIDUAL_REWARD = 0.01
SELFISH_REWARD = 0.1
COLLISION_PENALTY = -0.05

TEAM = "team"
SELFISH = "selfish"


@dataclass
class EnvConfig:
    position_tolerance: float = 0.02       # m
    orientation_tolerance: float = 0.1     # rad
    max_steps: int = 500
    observation_radius: float = 0.85       # m
    action_scale: float = 0.5              # rad per unit action
    reward_scheme: str = TEAM
    observe_others: bool = True
    action_delay_steps: int = 1
    dt: float = DEFAULT_DT
    sweep_resolution: float = 0.05         # rad, anti-tunneling check

    def __post_init__(self):
        if self.position_tolerance <= 0 or self.orientation_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.reward_scheme not in (TEAM, SELFISH):
            raise ValueError(f"unknown reward scheme {self.reward_scheme!r}")

    def with_tolerances(self, position_tolerance, orientation_tolerance):
        return replace(self, position_tolerance=position_tolerance,
                       orientation_tolerance=orientation_tolerance)


@dataclass
class Transition:
    observation: list           # sequence of 107-vectors
    action: np.ndarray          # 6, in [-1, 1]
    reward: float
    next_observation: list
    done: bool


class MultiArmEnv:
    """Kinematic multi-arm environment over one task at a time."""

    def __init__(self, arm: ArmModel = None, config: EnvConfig = None):
        self.arm = arm if arm is not None else ArmModel.default()
        self.config = config if config is not None else EnvConfig()
        self.task = None
        self.world = None
        self.done = True

    # -- lifecycle ----------------------------------------------------------

    def reset(self, task: Task, mode=None, record_log=False):
        """Set up the task and return the k initial observation sequences."""
        mode = mode or task.mode
        if mode == DYNAMIC and task.target_speed is None:
            raise ValueError("dynamic mode requires a task with a target speed")
        self.task = task
        self.mode = mode
        self.world = task_world(task, self.arm)
        self.k = task.k
        self.configs = np.array(task.q1, dtype=float)
        self.step_count = 0
        self.done = False
        self.all_reached_ever = False
        self.collided = False
        self._action_queue = deque(
            np.zeros((self.k, 6)) for _ in range(self.config.action_delay_steps))
        self.targets = self._targets_at(0)
        self._refresh_fk()
        self._current = self._snapshot()
        self._prev = self._current
        self.reached = self._reached_flags()
        self.log = [] if record_log else None
        self._log_step(rewards=[0.0] * self.k, collision_pairs=[])
        return self.observations()

    def _targets_at(self, step):
        if self.mode == DYNAMIC:
            return dynamic_target(self.task, step, self.config.max_steps,
                                  arm=self.arm, dt=self.config.dt)
        return static_targets(self.task, self.arm)

    def _refresh_fk(self):
        self.ee_poses = []
        self.link_positions = []
        for i in range(self.k):
            ee, origins = forward_kinematics(self.arm, self.configs[i])
            base = self.task.base_poses[i]
            self.ee_poses.append(base.compose(ee))
            self.link_positions.append(base.transform_points(origins))

    def _snapshot(self):
        """Per-arm (ee pose 7, link positions 30, joints 6, target 7) frame."""
        return [
            (self.ee_poses[i].as_vector(),
             self.link_positions[i].reshape(-1),
             self.configs[i].copy(),
             self.targets[i].as_vector())
            for i in range(self.k)
        ]

    def _reached_flags(self):
        flags = []
        for i in range(self.k):
            pos_err = np.linalg.norm(self.ee_poses[i].position - self.targets[i].position)
            rot_err = quat_angle(self.ee_poses[i].quaternion, self.targets[i].quaternion)
            flags.append(pos_err <= self.config.position_tolerance
                         and rot_err <= self.config.orientation_tolerance)
        return flags

    # -- observations -------------------------------------------------------

    def build_arm_state(self, arm_index):
        """107-vector: base 7 | ee 7+7 | links 30+30 | joints 6+6 | target 7+7
        (current frame first, previous-step frame second in each pair)."""
        i = arm_index
        ee, links, q, tgt = self._current[i]
        pee, plinks, pq, ptgt = self._prev[i]
        state = np.concatenate([
            self.task.base_poses[i].as_vector(),
            ee, pee, links, plinks, q, pq, tgt, ptgt,
        ])
        assert state.shape == (ARM_STATE_DIM,)
        return state

    def observations(self):
        """Per-arm observation sequences, sorted by decreasing base distance
        with the observing arm's own state last."""
        states = [self.build_arm_state(i) for i in range(self.k)]
        bases = np.stack([p.position for p in self.task.base_poses])
        sequences = []
        for i in range(self.k):
            if self.config.observe_others:
                dist = np.linalg.norm(bases - bases[i], axis=1)
                others = [j for j in range(self.k)
                          if j != i and dist[j] <= self.config.observation_radius]
                others.sort(key=lambda j: -dist[j])
                seq = [states[j] for j in others] + [states[i]]
            else:
                seq = [states[i]]
            sequences.append(seq)
        return sequences

    # -- stepping -----------------------------------------------------------

    def step(self, actions):
        """Apply (possibly delayed) actions; returns (obs, rewards, done, info)."""
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.k, 6):
            raise ValueError(f"expected actions of shape ({self.k}, 6)")

        self._action_queue.append(actions)
        applied = self._action_queue.popleft()

        old = self.configs
        new = np.stack([
            clamp_to_limits(self.arm, old[i] + self.config.action_scale * applied[i])
            for i in range(self.k)
        ])

        # swept collision check from old to new composite configuration
        span = np.abs(new - old).max()
        substeps = max(1, int(np.ceil(span / self.config.sweep_resolution)))
        collision_pairs = []
        for s in range(1, substeps + 1):
            q = old + (new - old) * (s / substeps)
            report = check_collision(self.world, q)
            if report.colliding:
                new = q
                collision_pairs = report.pairs
                break

        self._prev = self._current
        self.configs = new
        self.step_count += 1
        if self.mode == DYNAMIC:
            self.targets = self._targets_at(self.step_count)
        self._refresh_fk()
        self._current = self._snapshot()

        rewards = np.zeros(self.k)
        if collision_pairs:
            self.collided = True
            self.done = True
            involved = set()
            for (a, _), (b, _) in collision_pairs:
                involved.add(a)
                if isinstance(b, int):
                    involved.add(b)
            for a in involved:
                rewards[a] = COLLISION_PENALTY
            reached_now = self._reached_flags()
        else:
            reached_now = self._reached_flags()
            edge = INDIVIDUAL_REWARD if self.config.reward_scheme == TEAM else SELFISH_REWARD
            for i in range(self.k):
                if reached_now[i] and not self.reached[i]:
                    rewards[i] += edge
            if all(reached_now):
                self.all_reached_ever = True
                self.done = True
                if self.config.reward_scheme == TEAM:
                    rewards += TEAM_REWARD
            if self.step_count >= self.config.max_steps:
                self.done = True
        self.reached = reached_now

        info = {
            "step": self.step_count,
            "reached": list(reached_now),
            "all_reached": self.all_reached_ever,
            "collision_pairs": collision_pairs,
            "applied_action": applied,
        }
        self._log_step(rewards=rewards.tolist(), collision_pairs=collision_pairs)
        return self.observations(), rewards, self.done, info

    @property
    def success(self):
        return self.all_reached_ever

    # -- episode logging ----------------------------------------------------

    def _log_step(self, rewards, collision_pairs):
        if self.log is None:
            return
        self.log.append({
            "step": self.step_count,
            "configs": self.configs.tolist(),
            "targets": [t.as_vector().tolist() for t in self.targets],
            "rewards": rewards,
            "reached": [bool(r) for r in self.reached] if hasattr(self, "reached") else None,
            "collision_pairs": [[list(a), list(b)] for a, b in collision_pairs],
            "done": self.done,
        })

    def write_episode_log(self, path):
        if self.log is None:
            raise ValueError("episode was not recorded; pass record_log=True to reset()")
        with open(path, "w") as f:
            f.write(json.dumps({"task_id": self.task.id, "mode": self.mode,
                                "k": self.k}) + "\n")
            for entry in self.log:
                f.write(json.dumps(entry) + "\n")


# ---------------------------------------------------------------------------
# episode collection

def expert_action_source(action_sequences, action_scale):
    """Action source replaying precomputed per-arm delta sequences (open loop),
    emitting zero actions once exhausted."""
    length = max((len(s) for s in action_sequences), default=0)

    def source(observations, env):
        t = source.cursor
        source.cursor += 1
        k = len(action_sequences)
        out = np.zeros((k, 6))
        if t < length:
            for i in range(k):
                if t < len(action_sequences[i]):
                    out[i] = np.asarray(action_sequences[i][t]) / action_scale
        return out

    source.cursor = 0
    return source


def zero_action_source(observations, env):
    return np.zeros((env.k, 6))


def collect_episode(env: MultiArmEnv, task: Task, action_source, mode=None,
                    record_log=False):
    """Roll one episode to termination.

    action_source(observations, env) -> (k, 6) array in [-1, 1].
    Returns (per-arm transition lists, success flag).
    """
    obs = env.reset(task, mode=mode, record_log=record_log)
    transitions = [[] for _ in range(env.k)]
    while not env.done:
        actions = np.clip(action_source(obs, env), -1.0, 1.0)
        next_obs, rewards, done, _ = env.step(actions)
        for i in range(env.k):
            transitions[i].append(Transition(
                observation=obs[i], action=np.array(actions[i]),
                reward=float(rewards[i]), next_observation=next_obs[i],
                done=done))
        obs = next_obs
    return transitions, env.success
