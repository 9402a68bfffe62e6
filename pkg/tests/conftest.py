import numpy as np
import pytest

from multiarm.kinematics import ArmModel


@pytest.fixture(scope="session")
def arm():
    return ArmModel.default()


def random_config(arm, rng):
    lo, hi = arm.joint_limits[:, 0], arm.joint_limits[:, 1]
    return rng.uniform(lo, hi)


# One line per acceptance criterion, printed after the normal pytest summary.
# tests/test_acceptance.py fills this in; see record() there.
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        name, status = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"ACCEPTANCE {num:2d} [{status}] {name}")
