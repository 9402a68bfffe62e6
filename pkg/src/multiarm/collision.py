"""Capsule-based collision checking for multi-arm worlds.

Each arm's 10 link frame origins define 9 capsules. Sub-capsules that
subdivide one physical link are grouped by a link id so that touching,
collinear neighbours are never reported as self-collisions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import ArmModel, Pose, check_limits, forward_kinematics

# physical link id of each of the 9 capsules: base column, upper arm and
# forearm are split in two collinear halves each
CAPSULE_LINK_ID = np.array([0, 0, 1, 1, 2, 2, 3, 4, 5])
NUM_CAPSULES = 9
GROUND = "ground"


@dataclass(frozen=True)
class Capsule:
    endpoint_a: np.ndarray
    endpoint_b: np.ndarray
    radius: float

    def __post_init__(self):
        a = np.asarray(self.endpoint_a, dtype=float)
        b = np.asarray(self.endpoint_b, dtype=float)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("capsule endpoints must be finite")
        if self.radius <= 0.0:
            raise ValueError("capsule radius must be positive")
        object.__setattr__(self, "endpoint_a", a)
        object.__setattr__(self, "endpoint_b", b)


@dataclass
class CollisionReport:
    colliding: bool
    pairs: list = field(default_factory=list)


def segment_distances(p1, q1, p2, q2, eps=1e-12):
    """Batched minimum distance between segments [p1,q1] and [p2,q2].

    All inputs broadcast over the leading axes; the last axis is xyz.
    Degenerate (zero-length) segments are handled as points.
    """
    p1, q1, p2, q2 = (np.asarray(x, dtype=float) for x in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.sum(d1 * d1, axis=-1)
    e = np.sum(d2 * d2, axis=-1)
    f = np.sum(d2 * r, axis=-1)
    c = np.sum(d1 * r, axis=-1)
    b = np.sum(d1 * d2, axis=-1)
    denom = a * e - b * b

    safe_a = np.maximum(a, eps)
    safe_e = np.maximum(e, eps)
    s = np.where(denom > eps,
                 np.clip((b * f - c * e) / np.where(denom > eps, denom, 1.0), 0.0, 1.0),
                 0.0)
    t = (b * s + f) / safe_e
    s = np.where(t < 0.0, np.clip(-c / safe_a, 0.0, 1.0), s)
    s = np.where(t > 1.0, np.clip((b - c) / safe_a, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)
    # degenerate second segment: closest point on first toward p2
    s = np.where(e > eps, s, np.clip(-c / safe_a, 0.0, 1.0))
    t = np.where(e > eps, t, 0.0)
    # degenerate first segment
    s = np.where(a > eps, s, 0.0)
    t = np.where(a > eps, t, np.clip(f / safe_e, 0.0, 1.0))

    closest1 = p1 + s[..., None] * d1
    closest2 = p2 + t[..., None] * d2
    return np.linalg.norm(closest1 - closest2, axis=-1)


def capsule_distance(a: Capsule, b: Capsule):
    """Signed distance between two capsules; negative means penetration."""
    d = segment_distances(a.endpoint_a, a.endpoint_b, b.endpoint_a, b.endpoint_b)
    return float(d) - a.radius - b.radius


def capsule_radii(arm: ArmModel):
    """Radius of each of the 9 capsules: max of its endpoint link radii."""
    r = arm.link_radii
    return np.maximum(r[:-1], r[1:])


def arm_link_segments(arm: ArmModel, base: Pose, q):
    """(9, 2, 3) capsule endpoint array in world coordinates."""
    _, origins = forward_kinematics(arm, q)
    world = base.transform_points(origins)
    segs = np.empty((NUM_CAPSULES, 2, 3))
    segs[:, 0] = world[:-1]
    segs[:, 1] = world[1:]
    return segs


def arm_capsules(arm: ArmModel, base: Pose, q):
    """World-frame collision capsules of one arm (9 capsules)."""
    segs = arm_link_segments(arm, base, q)
    radii = capsule_radii(arm)
    return [Capsule(segs[i, 0], segs[i, 1], float(radii[i])) for i in range(NUM_CAPSULES)]


# Capsule index pairs within one arm whose physical links are non-adjacent.
# Links >= 2 (forearm + wrist cluster) are never paired with each other: their
# capsule over-approximations touch at nearly every configuration, including
# the home pose, so only fold-backs onto the base column / upper arm count.
_SELF_PAIRS = np.array([
    (i, j)
    for i in range(NUM_CAPSULES)
    for j in range(i + 1, NUM_CAPSULES)
    if CAPSULE_LINK_ID[j] - CAPSULE_LINK_ID[i] >= 2 and CAPSULE_LINK_ID[i] < 2
])
# capsules checked against the ground (base column exempt)
_GROUND_CAPSULES = np.nonzero(CAPSULE_LINK_ID >= 1)[0]


class World:
    """Immutable multi-arm scene: arms at planar base poses above a ground plane."""

    def __init__(self, arms, ground_height=0.0, ground_clearance=0.01):
        self.arms = tuple(arms)  # sequence of (ArmModel, Pose)
        self.ground_height = float(ground_height)
        self.ground_clearance = float(ground_clearance)
        for _, base in self.arms:
            if abs(base.position[2] - self.ground_height) > 1e-9:
                raise ValueError("base poses must sit on the ground plane")
            w, x, y, z = base.quaternion
            if abs(x) > 1e-9 or abs(y) > 1e-9:
                raise ValueError("base poses must be planar (no roll/pitch)")
        self._radii = [capsule_radii(arm) for arm, _ in self.arms]
        self._pair_cache = self._build_pairs()

    @property
    def arm_count(self):
        return len(self.arms)

    def _build_pairs(self):
        """Index arrays for all capsule pairs that ever need checking."""
        pairs = []  # (arm_i, cap_i, arm_j, cap_j)
        for ai in range(self.arm_count):
            for ci, cj in _SELF_PAIRS:
                pairs.append((ai, ci, ai, cj))
        for ai in range(self.arm_count):
            for aj in range(ai + 1, self.arm_count):
                arm_i, base_i = self.arms[ai]
                arm_j, base_j = self.arms[aj]
                span = (arm_i.reach + arm_j.reach
                        + self._radii[ai].max() + self._radii[aj].max())
                if np.linalg.norm(base_i.position - base_j.position) > span:
                    continue  # arms can never touch
                for ci in range(NUM_CAPSULES):
                    for cj in range(NUM_CAPSULES):
                        pairs.append((ai, ci, aj, cj))
        pairs = np.array(pairs, dtype=int) if pairs else np.empty((0, 4), dtype=int)
        rsum = np.array([self._radii[a][c] for a, c, _, _ in pairs]) \
            + np.array([self._radii[a][c] for _, _, a, c in pairs]) \
            if len(pairs) else np.empty(0)
        return pairs, rsum

    def link_segments(self, composite_q):
        """(k, 9, 2, 3) world-frame capsule endpoints for all arms."""
        if len(composite_q) != self.arm_count:
            raise ValueError(
                f"expected {self.arm_count} configurations, got {len(composite_q)}")
        return np.stack([
            arm_link_segments(arm, base, q)
            for (arm, base), q in zip(self.arms, composite_q)
        ])


def check_collision(world: World, composite_q) -> CollisionReport:
    """Self, arm-arm, and ground collision report for one composite config."""
    segs = world.link_segments(composite_q)
    pairs, rsum = world._pair_cache
    report = CollisionReport(colliding=False)

    if len(pairs):
        ai, ci, aj, cj = pairs.T
        dist = segment_distances(segs[ai, ci, 0], segs[ai, ci, 1],
                                 segs[aj, cj, 0], segs[aj, cj, 1])
        hit = dist - rsum < 0.0
        for idx in np.nonzero(hit)[0]:
            report.pairs.append(((int(ai[idx]), int(ci[idx])),
                                 (int(aj[idx]), int(cj[idx]))))

    floor = world.ground_height + world.ground_clearance
    for a in range(world.arm_count):
        radii = world._radii[a]
        for c in _GROUND_CAPSULES:
            low = min(segs[a, c, 0, 2], segs[a, c, 1, 2]) - radii[c]
            if low < floor:
                report.pairs.append(((a, int(c)), (GROUND, -1)))

    report.colliding = bool(report.pairs)
    return report


def is_collision_free(world: World, composite_q):
    return not check_collision(world, composite_q).colliding


def segment_collision_free(world: World, q_from, q_to, resolution=0.05):
    """True iff every interpolated composite config along q_from -> q_to is
    collision-free, stepped so no joint moves more than `resolution` between
    consecutive checks (both endpoints included)."""
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    q_from = np.asarray(q_from, dtype=float)
    q_to = np.asarray(q_to, dtype=float)
    span = np.abs(q_to - q_from).max() if q_from.size else 0.0
    steps = max(1, int(math.ceil(span / resolution)))
    for i in range(steps + 1):
        alpha = i / steps
        q = q_from + alpha * (q_to - q_from)
        if not is_collision_free(world, q):
            return False
    return True
