"""Task generation, difficulty metric, dynamic targets, and dataset I/O."""

import json
import math

import numpy as np
import pytest

from multiarm.collision import is_collision_free
from multiarm.kinematics import forward_kinematics, quat_angle
from multiarm.taskgen import (BASE_MIN_SEPARATION, DatasetParseError, DYNAMIC,
                              STATIC, Task, TaskDataset, dynamic_target,
                              ee_path_lengths, generate_dataset, generate_task,
                              pairwise_lens_fraction, read_dataset,
                              sample_base_poses, static_targets, task_world,
                              workspace_overlap, write_dataset)

FAST_MC = 5000  # reduced Monte-Carlo samples where full precision is not needed


# ---------------------------------------------------------------------------
# base placement

def test_base_poses_min_separation_and_bounds():
    rng = np.random.default_rng(0)
    for k in (2, 3, 4):
        for _ in range(20):
            poses = sample_base_poses(k, rng)
            xy = np.stack([p.position[:2] for p in poses])
            half = 0.5 * 0.9 * math.sqrt(k)
            assert np.all(np.abs(xy) <= half + 1e-12)
            d = np.linalg.norm(xy[:, None] - xy[None, :], axis=-1)
            iu = np.triu_indices(k, 1)
            assert d[iu].min() >= BASE_MIN_SEPARATION - 1e-12
            assert all(p.position[2] == 0.0 for p in poses)


def test_base_poses_rejects_bad_k():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_base_poses(0, rng)
    with pytest.raises(ValueError):
        sample_base_poses(17, rng)


# ---------------------------------------------------------------------------
# task generation

def test_generated_task_configs_are_collision_free(arm):
    rng = np.random.default_rng(1)
    task = generate_task(2, STATIC, rng, arm=arm, difficulty_samples=FAST_MC)
    world = task_world(task, arm)
    for q in (task.q1, task.q2, task.q3):
        assert q.shape == (2, 6)
        assert is_collision_free(world, q)
    assert task.target_speed is None
    assert 0.0 <= task.difficulty <= 1.0


def test_dynamic_task_has_speed(arm):
    rng = np.random.default_rng(2)
    task = generate_task(1, DYNAMIC, rng, arm=arm, difficulty_samples=FAST_MC)
    assert 0.01 <= task.target_speed <= 0.15


def test_generate_task_deterministic(arm):
    t1 = generate_task(2, STATIC, np.random.default_rng(3), arm=arm,
                       difficulty_samples=FAST_MC)
    t2 = generate_task(2, STATIC, np.random.default_rng(3), arm=arm,
                       difficulty_samples=FAST_MC)
    assert np.array_equal(t1.q1, t2.q1)
    assert np.array_equal(t1.q3, t2.q3)
    assert all(np.array_equal(a.as_vector(), b.as_vector())
               for a, b in zip(t1.base_poses, t2.base_poses))


# ---------------------------------------------------------------------------
# difficulty

def test_lens_fraction_limits():
    R = 0.85
    assert pairwise_lens_fraction(2 * R, R) == 0.0
    assert pairwise_lens_fraction(0.0, R) == 1.0
    assert pairwise_lens_fraction(R, R) == pytest.approx(5.0 / 16.0)


def test_difficulty_disjoint_and_coincident():
    R = 0.85
    assert workspace_overlap([[0, 0, 0], [2 * R + 0.1, 0, 0]], R, samples=FAST_MC) == 0.0
    assert workspace_overlap([[0, 0, 0], [0, 0, 0]], R, samples=200_000) == \
        pytest.approx(1.0, abs=1e-3)


def test_difficulty_matches_lens_sweep():
    """2-arm Monte-Carlo difficulty vs the analytic lens, within 1% absolute."""
    R = 0.85
    for d in (0.3, 0.6, R, 1.2, 1.6):
        mc = workspace_overlap([[0, 0, 0], [d, 0, 0]], R, samples=200_000)
        assert abs(mc - pairwise_lens_fraction(d, R)) < 0.01


def test_difficulty_monotone_in_distance():
    R = 0.85
    vals = [workspace_overlap([[0, 0, 0], [d, 0, 0]], R, samples=50_000)
            for d in (0.3, 0.7, 1.1, 1.5)]
    assert vals == sorted(vals, reverse=True)


def test_single_arm_difficulty_zero():
    assert workspace_overlap([[0, 0, 0]], 0.85) == 0.0


# ---------------------------------------------------------------------------
# targets

def test_static_targets_are_fk_of_q2(arm):
    rng = np.random.default_rng(4)
    task = generate_task(2, STATIC, rng, arm=arm, difficulty_samples=FAST_MC)
    targets = static_targets(task, arm)
    for i in range(2):
        ee, _ = forward_kinematics(arm, task.q2[i])
        world_ee = task.base_poses[i].compose(ee)
        assert np.allclose(targets[i].position, world_ee.position, atol=1e-12)


def test_dynamic_target_endpoints_and_speed(arm):
    rng = np.random.default_rng(5)
    task = generate_task(1, DYNAMIC, rng, arm=arm, difficulty_samples=FAST_MC)
    dt = 1.0 / 240.0
    total = 100_000  # enough steps to reach q3
    start = dynamic_target(task, 0, total, arm=arm, dt=dt)
    end = dynamic_target(task, total, total, arm=arm, dt=dt)
    ee2, _ = forward_kinematics(arm, task.q2[0])
    ee3, _ = forward_kinematics(arm, task.q3[0])
    assert np.allclose(start[0].position,
                       task.base_poses[0].compose(ee2).position, atol=1e-12)
    assert np.allclose(end[0].position,
                       task.base_poses[0].compose(ee3).position, atol=1e-12)

    # measured target speed stays within 5% of the commanded one mid-path
    lengths = ee_path_lengths(task, arm)
    n_mid = int(0.5 * lengths[0] / (task.target_speed * dt))
    window = 50
    p0 = dynamic_target(task, n_mid, total, arm=arm, dt=dt)[0].position
    p1 = dynamic_target(task, n_mid + window, total, arm=arm, dt=dt)[0].position
    measured = np.linalg.norm(p1 - p0) / (window * dt)
    assert measured == pytest.approx(task.target_speed, rel=0.05)


def test_dynamic_target_validation(arm):
    rng = np.random.default_rng(6)
    task = generate_task(1, STATIC, rng, arm=arm, difficulty_samples=FAST_MC)
    with pytest.raises(ValueError):
        dynamic_target(task, 0, 100, arm=arm)
    dyn = generate_task(1, DYNAMIC, rng, arm=arm, difficulty_samples=FAST_MC)
    with pytest.raises(ValueError):
        dynamic_target(dyn, 101, 100, arm=arm)


# ---------------------------------------------------------------------------
# datasets

def _tiny_dataset(seed=7):
    rng = np.random.default_rng(seed)
    arm = None
    tasks = [generate_task(1, STATIC, np.random.default_rng([seed, i]),
                           task_id=i, difficulty_samples=FAST_MC)
             for i in range(3)]
    return TaskDataset(tasks=tasks, mode=STATIC, generator_seed=seed)


def test_dataset_round_trip(tmp_path):
    ds = _tiny_dataset()
    path = tmp_path / "tasks.jsonl"
    write_dataset(ds, path)
    loaded = read_dataset(path)
    assert loaded.mode == STATIC and loaded.generator_seed == 7
    assert len(loaded.tasks) == 3
    for a, b in zip(ds.tasks, loaded.tasks):
        assert a.id == b.id and a.k == b.k
        assert np.allclose(a.q1, b.q1) and np.allclose(a.q3, b.q3)
        assert np.allclose(a.base_poses[0].as_vector(), b.base_poses[0].as_vector())
        assert a.difficulty == pytest.approx(b.difficulty)


def test_dataset_write_is_deterministic(tmp_path):
    ds = _tiny_dataset()
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_dataset(ds, p1)
    write_dataset(ds, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_dataset_corrupt_line_names_line_number(tmp_path):
    ds = _tiny_dataset()
    path = tmp_path / "tasks.jsonl"
    write_dataset(ds, path)
    lines = path.read_text().splitlines()
    lines[2] = lines[2][:-10]  # truncate the second task record (file line 3)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetParseError, match="line 3"):
        read_dataset(path)


def test_dataset_missing_header(tmp_path):
    path = tmp_path / "tasks.jsonl"
    path.write_text(json.dumps({"no": "header"}) + "\n")
    with pytest.raises(DatasetParseError, match="schema_version"):
        read_dataset(path)


def test_generate_dataset_cycles_arm_counts(arm):
    ds = generate_dataset([1, 2], 4, STATIC, seed=11, arm=arm)
    assert [t.k for t in ds.tasks] == [1, 2, 1, 2]
    assert [t.id for t in ds.tasks] == [0, 1, 2, 3]
