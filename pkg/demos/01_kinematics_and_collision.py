"""Kinematics and collision geometry walkthrough.

Loads the default 6-DoF arm, runs forward kinematics and the analytic
Jacobian, solves inverse kinematics for a reachable point, and shows how the
capsule model answers collision queries for one arm and for a two-arm world.
"""

import numpy as np

from multiarm.collision import (World, arm_capsules, capsule_distance,
                                check_collision)
from multiarm.kinematics import (ArmModel, Pose, forward_kinematics, jacobian,
                                 solve_ik)

arm = ArmModel.default()
print(f"arm: {arm.name}, reach {arm.reach:.3f} m, {len(arm.dh)} joints")

# --- forward kinematics ----------------------------------------------------
q = np.array([0.3, -0.8, 1.1, 0.2, 0.9, -0.4])
ee, origins = forward_kinematics(arm, q)
print(f"\nFK at q={q}")
print(f"  end effector position {np.round(ee.position, 4)}")
print(f"  end effector quaternion {np.round(ee.quaternion, 4)}")
print(f"  {len(origins)} link origins; first {np.round(origins[0], 3)}, "
      f"last {np.round(origins[-1], 3)}")

# --- Jacobian: predicted vs actual displacement ------------------------------
J = jacobian(arm, q)
dq = 1e-4 * np.array([1, -1, 1, 0, 1, -1])
ee2, _ = forward_kinematics(arm, q + dq)
predicted = J[:3] @ dq
actual = ee2.position - ee.position
print(f"\nJacobian check: |predicted - actual| ="
      f" {np.linalg.norm(predicted - actual):.2e} m for a 1e-4 rad step")

# --- inverse kinematics ------------------------------------------------------
target = np.array([0.35, 0.20, 0.40])
q_ik = solve_ik(arm, target, rng=np.random.default_rng(0))
ee_ik, _ = forward_kinematics(arm, q_ik)
print(f"\nIK to {target}: residual "
      f"{np.linalg.norm(ee_ik.position - target):.2e} m")

# --- capsule model -----------------------------------------------------------
caps = arm_capsules(arm, Pose.identity(), q)
print(f"\n{len(caps)} collision capsules at this configuration")
d = capsule_distance(caps[0], caps[-1])
print(f"  clearance between base capsule and wrist capsule: {d:.3f} m")

# --- two-arm world -----------------------------------------------------------
near = World([(arm, Pose.planar(0.0, 0.0, np.pi)),
              (arm, Pose.planar(0.45, 0.0, 0.0))])
far = World([(arm, Pose.planar(0.0, 0.0, np.pi)),
             (arm, Pose.planar(2.5, 0.0, 0.0))])
# both arms extended horizontally, each facing the other
stretched = np.array([[0.0, -0.3, 0.0, 0.0, 0.0, 0.0]] * 2)
print()
for name, world in (("bases 0.45 m apart", near), ("bases 2.5 m apart", far)):
    report = check_collision(world, stretched)
    verdict = "COLLIDING" if report.colliding else "free"
    print(f"  both arms stretched out, {name}: {verdict} "
          f"({len(report.pairs)} contact pairs)")
