"""Multi-arm motion-planning task generation and datasets.

A task is k planar base poses plus three collision-free composite joint
configurations (q1, q2, q3). Static tasks reach from q1 toward FK(q2);
dynamic tasks track targets interpolating from q2 to q3 at a sampled speed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .collision import World, is_collision_free
from .kinematics import ArmModel, Pose, forward_kinematics, solve_ik

STATIC = "static"
DYNAMIC = "dynamic"

DEFAULT_DT = 1.0 / 240.0
SPEED_RANGE = (0.01, 0.15)         # m/s, dynamic targets
BASE_MIN_SEPARATION = 0.30         # m
BASE_SQUARE_SIDE_COEFF = 0.9       # square side = coeff * sqrt(k), m
TARGET_RADIUS_MIN = 0.2            # m, IK target sampling lower bound
DIFFICULTY_SAMPLES = 200_000
_DIFFICULTY_SEED = 0x5EED


class TaskGenerationError(RuntimeError):
    pass


class DatasetParseError(ValueError):
    pass


@dataclass
class Task:
    id: int
    k: int
    mode: str
    base_poses: list            # k Pose
    q1: np.ndarray              # (k, 6)
    q2: np.ndarray
    q3: np.ndarray
    target_speed: float | None = None
    difficulty: float = 0.0
    _ee_path_lengths: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self):
        return {
            "id": self.id,
            "k": self.k,
            "mode": self.mode,
            "bases": [{"xyz": p.position.tolist(), "quat": p.quaternion.tolist()}
                      for p in self.base_poses],
            "q1": np.asarray(self.q1).tolist(),
            "q2": np.asarray(self.q2).tolist(),
            "q3": np.asarray(self.q3).tolist(),
            "speed": self.target_speed,
            "difficulty": self.difficulty,
        }

    @classmethod
    def from_dict(cls, rec):
        return cls(
            id=int(rec["id"]),
            k=int(rec["k"]),
            mode=rec["mode"],
            base_poses=[Pose(np.array(b["xyz"]), np.array(b["quat"])) for b in rec["bases"]],
            q1=np.array(rec["q1"], dtype=float),
            q2=np.array(rec["q2"], dtype=float),
            q3=np.array(rec["q3"], dtype=float),
            target_speed=rec.get("speed"),
            difficulty=float(rec.get("difficulty", 0.0)),
        )


@dataclass
class TaskDataset:
    tasks: list
    mode: str
    generator_seed: int


def task_world(task: Task, arm: ArmModel) -> World:
    return World([(arm, base) for base in task.base_poses])


def sample_base_poses(k, rng, d_min=BASE_MIN_SEPARATION, max_tries=1000):
    """k planar base poses, uniform in a square of side 0.9*sqrt(k), pairwise
    separated by at least d_min, with uniform yaw."""
    if not 1 <= k <= 16:
        raise ValueError("k must be in 1..16")
    half = 0.5 * BASE_SQUARE_SIDE_COEFF * math.sqrt(k)
    for _ in range(max_tries):
        xy = rng.uniform(-half, half, (k, 2))
        if k > 1:
            d = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=-1)
            if d[np.triu_indices(k, 1)].min() < d_min:
                continue
        yaws = rng.uniform(0.0, 2.0 * math.pi, k)
        return [Pose.planar(x, y, yaw) for (x, y), yaw in zip(xy, yaws)]
    raise TaskGenerationError(
        f"could not place {k} bases with separation {d_min} in {max_tries} tries")


def _sample_local_target(arm: ArmModel, rng):
    """Random end-effector target in the arm's upper hemisphere (base frame)."""
    while True:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n < 1e-12:
            continue
        v = v / n
        v[2] = abs(v[2])
        r = rng.uniform(TARGET_RADIUS_MIN, arm.reach)
        return v * r


def _sample_composite_config(world: World, rng, attempt_budget):
    """One collision-free composite configuration found by per-arm IK.

    Returns (config, attempts_used) or raises when the budget is exhausted.
    """
    k = world.arm_count
    configs = [arm.home_config.copy() for arm, _ in world.arms]
    attempts = 0
    for i in range(k):
        arm, base = world.arms[i]
        placed = False
        while not placed:
            attempts += 1
            if attempts > attempt_budget:
                raise TaskGenerationError("IK/collision attempt budget exhausted")
            target = _sample_local_target(arm, rng)
            q = solve_ik(arm, target, bias_home=True, rng=rng)
            if q is None:
                continue
            configs[i] = q
            # check the new arm against ground/self and already-placed arms
            if is_collision_free(world, configs):
                placed = True
    return np.stack(configs), attempts


def generate_task(k, mode, rng, arm=None, task_id=0, max_attempts=300,
                  max_layout_tries=50, difficulty_samples=DIFFICULTY_SAMPLES):
    """Generate one task: sampled bases and three collision-free composite
    configurations from home-biased IK on random reachable targets.

    Crowded base layouts can make collision-free IK samples arbitrarily rare,
    so a layout whose per-task attempt budget runs out is discarded and the
    bases are resampled."""
    if arm is None:
        arm = ArmModel.default()
    if mode not in (STATIC, DYNAMIC):
        raise ValueError(f"unknown mode {mode!r}")
    bases = None
    qs = None
    for _ in range(max_layout_tries):
        candidate = sample_base_poses(k, rng)
        world = World([(arm, b) for b in candidate])
        budget = max_attempts
        try:
            configs = []
            for _ in range(3):
                q, used = _sample_composite_config(world, rng, budget)
                budget -= used
                configs.append(q)
        except TaskGenerationError:
            continue
        bases, qs = candidate, configs
        break
    if qs is None:
        raise TaskGenerationError(
            f"no feasible {k}-arm layout in {max_layout_tries} tries")
    speed = float(rng.uniform(*SPEED_RANGE)) if mode == DYNAMIC else None
    task = Task(id=task_id, k=k, mode=mode, base_poses=bases,
                q1=qs[0], q2=qs[1], q3=qs[2], target_speed=speed)
    task.difficulty = task_difficulty(task, reach=arm.reach, samples=difficulty_samples)
    return task


# ---------------------------------------------------------------------------
# difficulty: hemispherical workspace overlap

def pairwise_lens_fraction(d, reach):
    """Fraction of one hemisphere inside another equal-radius hemisphere whose
    base center is d away on the ground plane (analytic sphere-sphere lens)."""
    R = reach
    if d >= 2.0 * R:
        return 0.0
    if d <= 0.0:
        return 1.0
    return (4.0 * R + d) * (2.0 * R - d) ** 2 / (16.0 * R ** 3)


def workspace_overlap(base_positions, reach, samples=DIFFICULTY_SAMPLES,
                      seed=_DIFFICULTY_SEED):
    """Max over arms of the fraction of its ground-hemisphere workspace lying
    inside the union of the other arms' hemispheres (Monte-Carlo)."""
    centers = np.asarray(base_positions, dtype=float)[:, :2]
    k = len(centers)
    if k < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(k):
        others = np.delete(centers, i, axis=0)
        # quick exits for disjoint / coincident layouts
        dists = np.linalg.norm(others - centers[i], axis=1)
        if np.all(dists >= 2.0 * reach):
            continue
        v = rng.normal(size=(samples, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        v[:, 2] = np.abs(v[:, 2])
        r = reach * np.cbrt(rng.uniform(0.0, 1.0, samples))
        pts = v * r[:, None]
        pts2 = pts[:, :2] + centers[i]
        d2 = np.linalg.norm(pts2[:, None, :] - others[None, :, :], axis=-1) ** 2 \
            + pts[:, 2:3] ** 2
        inside = np.any(d2 <= reach * reach, axis=1)
        worst = max(worst, float(inside.mean()))
    return worst


def task_difficulty(task: Task, reach=None, samples=DIFFICULTY_SAMPLES):
    if reach is None:
        reach = ArmModel.default().reach
    return workspace_overlap([p.position for p in task.base_poses], reach,
                             samples=samples)


# ---------------------------------------------------------------------------
# dynamic targets

def ee_path_lengths(task: Task, arm: ArmModel, samples=100):
    """Per-arm end-effector path length along the q2 -> q3 joint interpolation,
    measured by dense sampling; cached on the task."""
    if task._ee_path_lengths is not None:
        return task._ee_path_lengths
    alphas = np.linspace(0.0, 1.0, samples + 1)
    lengths = np.empty(task.k)
    for i in range(task.k):
        pts = np.empty((samples + 1, 3))
        for j, a in enumerate(alphas):
            q = (1.0 - a) * task.q2[i] + a * task.q3[i]
            ee, _ = forward_kinematics(arm, q)
            pts[j] = ee.position
        lengths[i] = np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()
    task._ee_path_lengths = lengths
    return lengths


def dynamic_interp_config(task: Task, arm: ArmModel, step, dt=DEFAULT_DT):
    """Composite interpolated configuration backing the dynamic targets."""
    lengths = ee_path_lengths(task, arm)
    travelled = step * dt * task.target_speed
    out = np.empty_like(task.q2)
    for i in range(task.k):
        alpha = 1.0 if lengths[i] <= 1e-12 else min(1.0, travelled / lengths[i])
        out[i] = (1.0 - alpha) * task.q2[i] + alpha * task.q3[i]
    return out


def dynamic_target(task: Task, step, total_steps, arm=None, dt=DEFAULT_DT):
    """World-frame target poses at a given step of a dynamic episode."""
    if task.mode != DYNAMIC:
        raise ValueError("dynamic_target called on a static task")
    if not 0 <= step <= total_steps:
        raise ValueError("step must be in [0, total_steps]")
    if arm is None:
        arm = ArmModel.default()
    q = dynamic_interp_config(task, arm, step, dt=dt)
    targets = []
    for i in range(task.k):
        ee, _ = forward_kinematics(arm, q[i])
        targets.append(task.base_poses[i].compose(ee))
    return targets


def static_targets(task: Task, arm: ArmModel):
    """World-frame target poses of a static task: FK of q2."""
    targets = []
    for i in range(task.k):
        ee, _ = forward_kinematics(arm, task.q2[i])
        targets.append(task.base_poses[i].compose(ee))
    return targets


# ---------------------------------------------------------------------------
# dataset generation and JSON-lines I/O

SCHEMA_VERSION = 1


def generate_dataset(k_values, count, mode, seed, arm=None, progress=None):
    """Deterministic dataset: task i uses rng seeded by (seed, i) and arm count
    k_values[i % len(k_values)] (even split across arm counts)."""
    if arm is None:
        arm = ArmModel.default()
    tasks = []
    for i in range(count):
        k = k_values[i % len(k_values)]
        rng = np.random.default_rng([seed, i])
        tasks.append(generate_task(k, mode, rng, arm=arm, task_id=i))
        if progress is not None:
            progress(i + 1, count)
    return TaskDataset(tasks=tasks, mode=mode, generator_seed=seed)


def write_dataset(dataset: TaskDataset, path):
    with open(path, "w") as f:
        header = {"schema_version": SCHEMA_VERSION, "mode": dataset.mode,
                  "generator_seed": dataset.generator_seed}
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for task in dataset.tasks:
            f.write(json.dumps(task.to_dict(), sort_keys=True) + "\n")


def read_dataset(path) -> TaskDataset:
    tasks = []
    with open(path) as f:
        lines = f.readlines()
    if not lines:
        return TaskDataset(tasks=[], mode=STATIC, generator_seed=0)
    try:
        header = json.loads(lines[0])
        if "schema_version" not in header:
            raise DatasetParseError("line 1: missing schema_version header")
    except json.JSONDecodeError as e:
        raise DatasetParseError(f"line 1: {e}") from e
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            tasks.append(Task.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DatasetParseError(f"line {n}: {e}") from e
    return TaskDataset(tasks=tasks, mode=header.get("mode", STATIC),
                       generator_seed=header.get("generator_seed", 0))
