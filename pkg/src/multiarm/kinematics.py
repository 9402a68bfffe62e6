"""Forward/inverse kinematics for 6-DoF serial arms described by DH parameters.

All chain quantities are expressed in the arm's own base frame; world-frame
placement is handled by the caller through a base Pose.
"""

from __future__ import annotations

import importlib.resources
import json
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# chain frame origins exposed per configuration (base column is subdivided,
# and the two long links carry midpoints, so capsule radii can vary per link)
NUM_LINK_ORIGINS = 10
NUM_JOINTS = 6


class JointLimitError(ValueError):
    """Raised when a configuration violates a joint limit."""

    def __init__(self, joint_index, value, lo, hi):
        self.joint_index = joint_index
        super().__init__(
            f"joint {joint_index} angle {value:.6f} rad outside limits "
            f"[{lo:.6f}, {hi:.6f}]"
        )


def wrap_angle(q):
    """Wrap angles to the interval (-pi, pi]."""
    q = np.asarray(q, dtype=float)
    return (q - math.pi) % (-TWO_PI) + math.pi


# ---------------------------------------------------------------------------
# quaternions (w, x, y, z)

def quat_canonical(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def quat_from_matrix(R):
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (R[2, 1] - R[1, 2]) / s,
            (R[0, 2] - R[2, 0]) / s,
            (R[1, 0] - R[0, 1]) / s,
        ])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    return quat_canonical(q)


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_angle(a, b):
    """Geodesic rotation angle between two unit quaternions, in [0, pi]."""
    d = min(1.0, abs(float(np.dot(a, b))))
    return 2.0 * math.acos(d)


@dataclass(frozen=True)
class Pose:
    """Rigid pose: position (m) and unit quaternion (w, x, y, z), w >= 0."""

    position: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "quaternion", quat_canonical(self.quaternion))

    @classmethod
    def identity(cls):
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def planar(cls, x, y, yaw, z=0.0):
        """Pose on the z=z plane with zero roll/pitch."""
        return cls(np.array([x, y, z]),
                   np.array([math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0)]))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3].copy(), quat_from_matrix(T[:3, :3]))

    def to_matrix(self):
        T = np.eye(4)
        T[:3, :3] = quat_to_matrix(self.quaternion)
        T[:3, 3] = self.position
        return T

    def rotation(self):
        return quat_to_matrix(self.quaternion)

    def transform_point(self, p):
        return self.rotation() @ np.asarray(p, dtype=float) + self.position

    def transform_points(self, pts):
        return np.asarray(pts, dtype=float) @ self.rotation().T + self.position

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other's frame: returns self * other."""
        return Pose(self.transform_point(other.position),
                    quat_multiply(self.quaternion, other.quaternion))

    def as_vector(self):
        """7-vector [x, y, z, qw, qx, qy, qz]."""
        return np.concatenate([self.position, self.quaternion])

    @property
    def yaw(self):
        w, x, y, z = self.quaternion
        return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


@dataclass(frozen=True)
class ArmModel:
    """Kinematic description of a 6-DoF revolute serial arm.

    dh rows are (a, alpha, d, theta0) in the standard DH convention; theta0 is
    a constant joint-angle offset added to the commanded angle.
    """

    dh: np.ndarray                 # (6, 4)
    joint_limits: np.ndarray       # (6, 2) lo < hi
    link_radii: np.ndarray         # (10,) collision radius per frame origin
    reach: float
    home_config: np.ndarray        # (6,)
    name: str = "arm"

    def __post_init__(self):
        object.__setattr__(self, "dh", np.asarray(self.dh, dtype=float).reshape(NUM_JOINTS, 4))
        limits = np.asarray(self.joint_limits, dtype=float).reshape(NUM_JOINTS, 2)
        if np.any(limits[:, 0] >= limits[:, 1]):
            raise ValueError("joint limits must satisfy lo < hi")
        radii = np.asarray(self.link_radii, dtype=float).reshape(NUM_LINK_ORIGINS)
        if np.any(radii <= 0.0):
            raise ValueError("link radii must be positive")
        if self.reach <= 0.0:
            raise ValueError("reach must be positive")
        object.__setattr__(self, "joint_limits", limits)
        object.__setattr__(self, "link_radii", radii)
        object.__setattr__(self, "home_config", np.asarray(self.home_config, dtype=float).reshape(NUM_JOINTS))

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        return {
            "name": self.name,
            "dh": [{"a": float(a), "alpha": float(al), "d": float(d), "theta0": float(t0)}
                   for a, al, d, t0 in self.dh],
            "limits": self.joint_limits.tolist(),
            "link_radii": self.link_radii.tolist(),
            "reach": float(self.reach),
            "home": self.home_config.tolist(),
        }

    @classmethod
    def from_dict(cls, rec):
        dh = np.array([[j["a"], j["alpha"], j["d"], j["theta0"]] for j in rec["dh"]])
        return cls(dh=dh,
                   joint_limits=np.array(rec["limits"]),
                   link_radii=np.array(rec["link_radii"]),
                   reach=float(rec["reach"]),
                   home_config=np.array(rec["home"]),
                   name=rec.get("name", "arm"))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    @classmethod
    def default(cls):
        """Bundled UR5-like arm (reach 0.85 m)."""
        text = importlib.resources.files("multiarm.data").joinpath("ur5_like.json").read_text()
        return cls.from_dict(json.loads(text))


def check_limits(arm: ArmModel, q):
    """Wrap q to (-pi, pi] and verify joint limits; returns the wrapped q."""
    q = wrap_angle(q)
    if q.shape != (NUM_JOINTS,):
        raise ValueError(f"expected {NUM_JOINTS} joint angles, got shape {q.shape}")
    lo, hi = arm.joint_limits[:, 0], arm.joint_limits[:, 1]
    # wrapping is not bit-exact (wrap_angle(-2.9) can round 1 ulp below -2.9),
    # so violations within 1e-9 snap back onto the limit
    q = np.where((q < lo) & (q >= lo - 1e-9), lo, q)
    q = np.where((q > hi) & (q <= hi + 1e-9), hi, q)
    bad = np.nonzero((q < lo) | (q > hi))[0]
    if bad.size:
        j = int(bad[0])
        raise JointLimitError(j, float(q[j]), float(lo[j]), float(hi[j]))
    return q


def clamp_to_limits(arm: ArmModel, q):
    q = wrap_angle(q)
    return np.clip(q, arm.joint_limits[:, 0], arm.joint_limits[:, 1])


def _dh_matrix(a, alpha, d, theta):
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def joint_frames(arm: ArmModel, q):
    """Cumulative transforms [T0..T6]; T0 is the identity (base frame)."""
    frames = [np.eye(4)]
    T = np.eye(4)
    for i in range(NUM_JOINTS):
        a, alpha, d, theta0 = arm.dh[i]
        T = T @ _dh_matrix(a, alpha, d, float(q[i]) + theta0)
        frames.append(T)
    return frames


def _link_origins_from_frames(frames):
    p = [T[:3, 3] for T in frames]  # p[0]..p[6]
    origins = np.empty((NUM_LINK_ORIGINS, 3))
    origins[0] = p[0]
    origins[1] = 0.5 * (p[0] + p[1])
    origins[2] = p[1]
    origins[3] = 0.5 * (p[1] + p[2])
    origins[4] = p[2]
    origins[5] = 0.5 * (p[2] + p[3])
    origins[6] = p[3]
    origins[7] = p[4]
    origins[8] = p[5]
    origins[9] = p[6]
    return origins


def forward_kinematics(arm: ArmModel, q):
    """End-effector pose and the 10 link frame origins, in the base frame."""
    q = check_limits(arm, q)
    frames = joint_frames(arm, q)
    ee = Pose.from_matrix(frames[-1])
    return ee, _link_origins_from_frames(frames)


def fk_position(arm: ArmModel, q):
    """End-effector position only (no limit check); IK inner-loop helper."""
    frames = joint_frames(arm, q)
    return frames[-1][:3, 3]


def jacobian(arm: ArmModel, q):
    """Geometric Jacobian (6x6): rows 0-2 linear, rows 3-5 angular velocity."""
    q = check_limits(arm, q)
    frames = joint_frames(arm, q)
    p_ee = frames[-1][:3, 3]
    J = np.empty((6, 6))
    for i in range(NUM_JOINTS):
        z = frames[i][:3, 2]
        p = frames[i][:3, 3]
        J[:3, i] = np.cross(z, p_ee - p)
        J[3:, i] = z
    return J


def position_jacobian(arm: ArmModel, q):
    frames = joint_frames(arm, q)
    p_ee = frames[-1][:3, 3]
    J = np.empty((3, 6))
    for i in range(NUM_JOINTS):
        z = frames[i][:3, 2]
        J[:, i] = np.cross(z, p_ee - frames[i][:3, 3])
    return J


def solve_ik(arm: ArmModel, target_position, seed=None, bias_home=True, rng=None,
             pos_tol=1e-4, max_iters=200, max_restarts=10, damping=0.05,
             home_gain=0.2, max_step=0.5):
    """Damped-least-squares IK for the end-effector position.

    Returns an in-limit joint configuration with FK position error below
    pos_tol, or None when all restarts fail. With bias_home, redundant motion
    is pulled toward home_config through the position-Jacobian null space and
    the first attempt starts near home.
    """
    target = np.asarray(target_position, dtype=float)
    if np.linalg.norm(target) > arm.reach:
        return None
    if rng is None:
        rng = np.random.default_rng()
    lo, hi = arm.joint_limits[:, 0], arm.joint_limits[:, 1]
    lam2 = damping * damping

    for attempt in range(max_restarts):
        if attempt == 0 and seed is not None:
            q = clamp_to_limits(arm, np.asarray(seed, dtype=float))
        elif attempt == 0 and bias_home:
            q = clamp_to_limits(arm, arm.home_config + rng.uniform(-0.3, 0.3, NUM_JOINTS))
        else:
            q = rng.uniform(lo, hi)
        for _ in range(max_iters):
            err = target - fk_position(arm, q)
            if np.linalg.norm(err) < pos_tol:
                return clamp_to_limits(arm, q)
            J = position_jacobian(arm, q)
            dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(3), err)
            if bias_home:
                Jp = np.linalg.pinv(J, rcond=1e-8)
                dq = dq + (np.eye(NUM_JOINTS) - Jp @ J) @ (home_gain * wrap_angle(arm.home_config - q))
            n = np.linalg.norm(dq)
            if n > max_step:
                dq = dq * (max_step / n)
            q = clamp_to_limits(arm, q + dq)
        err = target - fk_position(arm, q)
        if np.linalg.norm(err) < pos_tol:
            return clamp_to_limits(arm, q)
    return None
