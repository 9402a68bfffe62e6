"""Evaluation bucketing, success metric, benchmarks, ablation comparison."""

import numpy as np
import pytest
import torch

from multiarm.env import EnvConfig, MultiArmEnv
from multiarm.eval_bench import (DYNAMIC_BUCKETS, STATIC_BUCKETS, EpisodeResult,
                                 EvalReport, bench_planner, bench_policy_latency,
                                 compare_ablations, evaluate,
                                 policy_action_source)
from multiarm.neural import NetConfig, PolicyNet, save_checkpoint
from multiarm.taskgen import STATIC, Task, TaskDataset, generate_task


def _result(difficulty, success, mode=STATIC, speed=None):
    return EpisodeResult(task_id=0, k=1, mode=mode, difficulty=difficulty,
                         target_speed=speed, success=success, steps=1,
                         collided=False)


def test_bucket_boundaries_static():
    report = EvalReport(results=[
        _result(0.0, True), _result(0.349, False),       # easy
        _result(0.35, True), _result(0.4499, True),      # medium
        _result(0.45, False), _result(0.99, True),       # hard (open-ended)
    ], mode=STATIC)
    b = report.bucketed()
    assert b["easy"]["n"] == 2 and b["easy"]["success_rate"] == 0.5
    assert b["medium"]["n"] == 2 and b["medium"]["success_rate"] == 1.0
    assert b["hard"]["n"] == 2 and b["hard"]["success_rate"] == 0.5
    assert report.success_rate == pytest.approx(4 / 6)


def test_bucket_boundaries_dynamic():
    report = EvalReport(results=[
        _result(0.0, True, mode="dynamic", speed=0.02),
        _result(0.0, False, mode="dynamic", speed=0.07),
        _result(0.0, True, mode="dynamic", speed=0.12),
        _result(0.0, True, mode="dynamic", speed=0.15),
    ], mode="dynamic")
    b = report.bucketed()
    assert b["slow"]["n"] == 1 and b["medium"]["n"] == 1 and b["fast"]["n"] == 2


def test_report_csv_and_json(tmp_path):
    report = EvalReport(results=[_result(0.1, True), _result(0.5, False)],
                        mode=STATIC)
    csv_path = tmp_path / "r.csv"
    report.write_csv(csv_path)
    lines = csv_path.read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("task_id")
    report.write_json(tmp_path / "r.json")
    import json
    rec = json.load(open(tmp_path / "r.json"))
    assert rec["episodes"] == 2


@pytest.fixture(scope="module")
def small_dataset(arm):
    tasks = [generate_task(1, STATIC, np.random.default_rng([50, i]), arm=arm,
                           task_id=i, difficulty_samples=2000) for i in range(2)]
    return TaskDataset(tasks=tasks, mode=STATIC, generator_seed=50)


def test_evaluate_untrained_policy(arm, small_dataset):
    torch.manual_seed(0)
    policy = PolicyNet(NetConfig(hidden_dim=8, mlp_dims=(8, 6))).to(torch.float64)
    report = evaluate(policy, small_dataset, EnvConfig(max_steps=15), arm=arm)
    assert len(report.results) == 2
    assert all(r.steps <= 15 for r in report.results)


def test_evaluate_success_at_step_zero(arm, small_dataset):
    """A task whose start equals its goal counts as an immediate success."""
    base = small_dataset.tasks[0]
    trivial = Task(id=9, k=1, mode=STATIC, base_poses=base.base_poses,
                   q1=base.q2.copy(), q2=base.q2.copy(), q3=base.q3.copy())
    ds = TaskDataset(tasks=[trivial], mode=STATIC, generator_seed=0)
    policy = PolicyNet(NetConfig(hidden_dim=8, mlp_dims=(8, 6))).to(torch.float64)
    report = evaluate(policy, ds, EnvConfig(max_steps=5), arm=arm)
    assert report.results[0].success


def test_evaluate_deterministic(arm, small_dataset):
    torch.manual_seed(1)
    policy = PolicyNet(NetConfig(hidden_dim=8, mlp_dims=(8, 6))).to(torch.float64)
    r1 = evaluate(policy, small_dataset, EnvConfig(max_steps=10), arm=arm)
    r2 = evaluate(policy, small_dataset, EnvConfig(max_steps=10), arm=arm)
    assert [x.steps for x in r1.results] == [x.steps for x in r2.results]
    assert [x.success for x in r1.results] == [x.success for x in r2.results]


def test_bench_policy_latency_stats():
    policy = PolicyNet(NetConfig(hidden_dim=16, mlp_dims=(16,))).to(torch.float32)
    stats = bench_policy_latency(policy, reps=20)
    assert stats["n"] == 20
    assert 0 < stats["median_ms"] < 1000
    assert stats["iqr_ms"] >= 0
    with pytest.raises(ValueError):
        bench_policy_latency(policy, reps=5)


def test_bench_planner_groups_by_k(arm, small_dataset):
    out = bench_planner(small_dataset, arm=arm)
    assert set(out) == {1}
    assert out[1]["n"] == 2
    assert out[1]["success_rate"] == 1.0


def test_compare_ablations_missing_and_present(tmp_path, arm, small_dataset):
    cfg = NetConfig(hidden_dim=8, mlp_dims=(8, 6))
    policy = PolicyNet(cfg).to(torch.float64)
    ck = tmp_path / "full.bin"
    save_checkpoint(ck, {"policy": policy}, {"tag": "full"})
    rows = compare_ablations({"full": str(ck), "gone": None},
                             small_dataset, EnvConfig(max_steps=5), arm=arm,
                             net_config=cfg)
    assert rows["gone"]["absent"] is True
    assert rows["full"]["absent"] is False
    assert rows["full"]["episodes"] == 2
