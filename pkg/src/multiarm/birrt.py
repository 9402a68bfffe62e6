"""Centralized bidirectional RRT in composite joint space, trajectory
decimation, and conversion to capped per-arm delta-joint action sequences."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .collision import World, is_collision_free, segment_collision_free


class PlanningError(ValueError):
    pass


@dataclass
class PlannerParams:
    max_iterations: int = 4000
    resolution: float = 0.05      # rad, collision-check step
    steer_step: float = 0.2       # rad, max extension per iteration
    goal_sample_prob: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.max_iterations, self.resolution, self.steer_step,
               self.goal_sample_prob) <= 0:
            raise ValueError("planner parameters must be positive")
        if self.resolution > self.steer_step:
            raise ValueError("resolution must not exceed steer_step")


@dataclass
class Trajectory:
    """Ordered composite joint-space waypoints, each of shape (k, 6)."""
    waypoints: list

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("trajectory must be nonempty")
        self.waypoints = [np.asarray(w, dtype=float) for w in self.waypoints]

    def __len__(self):
        return len(self.waypoints)

    def as_array(self):
        """(m, k*6) flattened waypoint matrix."""
        return np.stack([w.reshape(-1) for w in self.waypoints])


class _Tree:
    def __init__(self, root, capacity=256):
        dim = root.size
        self.configs = np.empty((capacity, dim))
        self.configs[0] = root
        self.parents = [-1]
        self.size = 1

    def nearest(self, q):
        d = np.linalg.norm(self.configs[:self.size] - q, axis=1)
        return int(np.argmin(d))

    def add(self, q, parent):
        if self.size == len(self.configs):
            grown = np.empty((2 * self.size, self.configs.shape[1]))
            grown[:self.size] = self.configs
            self.configs = grown
        self.configs[self.size] = q
        self.parents.append(parent)
        self.size += 1
        return self.size - 1

    def path_to_root(self, index):
        path = []
        while index != -1:
            path.append(self.configs[index].copy())
            index = self.parents[index]
        return path


def plan(world: World, q_start, q_goal, params: PlannerParams):
    """Bidirectional RRT over the composite configuration space.

    Euclidean composite joint distance is the metric; trees alternate between
    an extend step toward a random (or goal-biased) sample and a greedy
    connect toward the new node. Returns a Trajectory or None on failure.
    """
    q_start = np.asarray(q_start, dtype=float)
    q_goal = np.asarray(q_goal, dtype=float)
    k = world.arm_count
    if q_start.shape != (k, 6) or q_goal.shape != (k, 6):
        raise ValueError("start/goal must have shape (k, 6)")
    if not is_collision_free(world, q_start):
        raise PlanningError("start configuration is in collision")
    if not is_collision_free(world, q_goal):
        raise PlanningError("goal configuration is in collision")

    flat_start = q_start.reshape(-1)
    flat_goal = q_goal.reshape(-1)
    if np.array_equal(flat_start, flat_goal):
        return Trajectory([q_start])

    def edge_free(a, b):
        return segment_collision_free(world, a.reshape(k, 6), b.reshape(k, 6),
                                      params.resolution)

    if edge_free(flat_start, flat_goal):
        return Trajectory([q_start, q_goal])

    rng = np.random.default_rng(params.rng_seed)
    lo = np.concatenate([arm.joint_limits[:, 0] for arm, _ in world.arms])
    hi = np.concatenate([arm.joint_limits[:, 1] for arm, _ in world.arms])
    tree_a = _Tree(flat_start)
    tree_b = _Tree(flat_goal)
    roots = {id(tree_a): flat_goal, id(tree_b): flat_start}
    step = params.steer_step

    def steer(q_near, q_target):
        d = np.linalg.norm(q_target - q_near)
        if d <= step:
            return q_target
        return q_near + (q_target - q_near) * (step / d)

    def extend(tree, q_target):
        """One bounded extension toward q_target; returns new index or None."""
        i = tree.nearest(q_target)
        q_new = steer(tree.configs[i], q_target)
        if edge_free(tree.configs[i], q_new):
            return tree.add(q_new, i)
        return None

    for _ in range(params.max_iterations):
        if rng.random() < params.goal_sample_prob:
            sample = roots[id(tree_a)].copy()
        else:
            sample = rng.uniform(lo, hi)
        new_index = extend(tree_a, sample)
        if new_index is not None:
            # greedy connect from the other tree toward the new node
            q_new = tree_a.configs[new_index]
            j = tree_b.nearest(q_new)
            while True:
                q_next = steer(tree_b.configs[j], q_new)
                if not edge_free(tree_b.configs[j], q_next):
                    break
                j = tree_b.add(q_next, j)
                if np.array_equal(q_next, q_new):
                    # connected: stitch start-side and goal-side paths
                    if roots[id(tree_a)] is flat_goal:
                        start_tree, si = tree_a, new_index
                        goal_tree, gi = tree_b, j
                    else:
                        start_tree, si = tree_b, j
                        goal_tree, gi = tree_a, new_index
                    path = start_tree.path_to_root(si)[::-1]
                    path += goal_tree.path_to_root(gi)[1:]
                    return Trajectory([p.reshape(world.arm_count, 6) for p in path])
        tree_a, tree_b = tree_b, tree_a
    return None


# ---------------------------------------------------------------------------
# decimation (Ramer-Douglas-Peucker in composite joint space)

def _point_segment_distance(p, a, b):
    d = b - a
    denom = float(d @ d)
    t = 0.0 if denom <= 1e-18 else float(np.clip((p - a) @ d / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * d)))


def decimate(traj: Trajectory, angle_tolerance=0.01) -> Trajectory:
    """Polyline simplification keeping every original waypoint within
    angle_tolerance of the simplified curve (Euclidean distance bounds the
    per-joint max-norm deviation from above). Endpoints are preserved."""
    if angle_tolerance <= 0.0:
        raise ValueError("angle_tolerance must be positive")
    pts = traj.as_array()
    n = len(pts)
    if n <= 2:
        return Trajectory([w.copy() for w in traj.waypoints])
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        first, last = stack.pop()
        worst, index = 0.0, -1
        for i in range(first + 1, last):
            d = _point_segment_distance(pts[i], pts[first], pts[last])
            if d > worst:
                worst, index = d, i
        if worst > angle_tolerance:
            keep[index] = True
            stack.append((first, index))
            stack.append((index, last))
    shape = traj.waypoints[0].shape
    return Trajectory([pts[i].reshape(shape) for i in np.nonzero(keep)[0]])


def to_actions(traj: Trajectory, cap=0.5):
    """Per-arm sequences of capped delta-joint actions.

    Each action is the clamped remaining delta toward the next simplified
    waypoint; arms are padded with zero actions to equal length so they
    execute in lock-step. Open-loop execution from waypoints[0] lands on the
    final waypoint."""
    if cap <= 0.0:
        raise ValueError("cap must be positive")
    k = traj.waypoints[0].shape[0]
    sequences = []
    for i in range(k):
        actions = []
        current = traj.waypoints[0][i].copy()
        for w in traj.waypoints[1:]:
            target = w[i]
            while np.abs(target - current).max() > 1e-12:
                a = np.clip(target - current, -cap, cap)
                actions.append(a)
                current = current + a
        sequences.append(actions)
    length = max((len(s) for s in sequences), default=0)
    zero = np.zeros(6)
    return [s + [zero.copy() for _ in range(length - len(s))] for s in sequences]


# ---------------------------------------------------------------------------
# expert file I/O (JSON lines keyed by task id)

def write_expert_entry(f, task_id, traj: Trajectory | None, seed, iterations_used=None):
    rec = {
        "id": task_id,
        "waypoints": None if traj is None else [w.tolist() for w in traj.waypoints],
        "seed": seed,
        "iterations_used": iterations_used,
    }
    f.write(json.dumps(rec, sort_keys=True) + "\n")


def read_expert_file(path):
    """Map task id -> Trajectory (or None for recorded failures)."""
    out = {}
    with open(path) as f:
        for n, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"expert file line {n}: {e}") from e
            wp = rec["waypoints"]
            out[int(rec["id"])] = None if wp is None else Trajectory(
                [np.array(w, dtype=float) for w in wp])
    return out
