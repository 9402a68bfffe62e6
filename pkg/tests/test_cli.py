"""CLI behavior: subcommands, option precedence, resumability, error paths."""

import json
import os

import numpy as np
import pytest

from multiarm.cli import main
from multiarm.birrt import read_expert_file
from multiarm.taskgen import read_dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Shared tiny dataset + expert file produced through the CLI itself."""
    root = tmp_path_factory.mktemp("cli")
    tasks = str(root / "tasks.jsonl")
    expert = str(root / "expert.jsonl")
    assert main(["gen-tasks", "--count", "2", "--arms", "1", "--mode", "static",
                 "--seed", "5", "--out", tasks]) == 0
    assert main(["gen-expert", "--tasks", tasks, "--out", expert,
                 "--seed", "5"]) == 0
    return root, tasks, expert


def test_gen_tasks_output_and_runconfig(workspace):
    root, tasks, _ = workspace
    ds = read_dataset(tasks)
    assert len(ds.tasks) == 2 and ds.generator_seed == 5
    rc = json.load(open(root / "tasks.runconfig.json"))
    assert rc["command"] == "gen-tasks"
    assert rc["options"]["count"] == 2


def test_gen_tasks_determinism(tmp_path, workspace):
    _, tasks, _ = workspace
    again = str(tmp_path / "again.jsonl")
    assert main(["gen-tasks", "--count", "2", "--arms", "1", "--mode", "static",
                 "--seed", "5", "--out", again]) == 0
    assert open(tasks, "rb").read() == open(again, "rb").read()


def test_gen_expert_resume_skips_existing(workspace, capsys):
    _, tasks, expert = workspace
    before = open(expert).read()
    assert main(["gen-expert", "--tasks", tasks, "--out", expert,
                 "--seed", "5"]) == 0
    out = capsys.readouterr().out
    assert "skipped 2" in out
    assert open(expert).read() == before


def test_gen_expert_file_contents(workspace):
    _, _, expert = workspace
    loaded = read_expert_file(expert)
    assert set(loaded) == {0, 1}


def test_bad_inputs_exit_nonzero(tmp_path, capsys):
    assert main(["gen-tasks", "--count", "0", "--out", str(tmp_path / "t")]) == 2
    assert "count" in capsys.readouterr().err
    assert main(["gen-tasks", "--count", "1", "--arms", "zebra",
                 "--out", str(tmp_path / "t")]) == 2
    assert main(["eval", "--tasks", "/does/not/exist", "--checkpoint", "x",
                 "--out", str(tmp_path / "e.csv")]) == 2
    assert "not found" in capsys.readouterr().err
    assert main(["rollout", "--tasks", "/does/not/exist", "--task-id", "0",
                 "--out", str(tmp_path / "r")]) == 2


def test_config_file_precedence(tmp_path, capsys):
    """File values override defaults; explicit flags override the file."""
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"count": 1, "arms": "1", "seed": 9}))
    out = str(tmp_path / "tasks.jsonl")
    assert main(["gen-tasks", "--config", str(cfg), "--seed", "5",
                 "--out", out]) == 0
    rc = json.load(open(tmp_path / "tasks.runconfig.json"))
    assert rc["options"]["count"] == 1      # from file
    assert rc["options"]["seed"] == 5       # flag wins
    ds = read_dataset(out)
    assert len(ds.tasks) == 1 and ds.generator_seed == 5


def test_config_file_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus_option": 1}))
    assert main(["gen-tasks", "--config", str(cfg),
                 "--out", str(tmp_path / "t")]) == 2
    assert "bogus_option" in capsys.readouterr().err


def test_rollout_expert_writes_log(workspace, tmp_path, capsys):
    _, tasks, expert = workspace
    out = str(tmp_path / "ep.jsonl")
    assert main(["rollout", "--tasks", tasks, "--task-id", "0",
                 "--expert", expert, "--out", out]) == 0
    assert "task 0" in capsys.readouterr().out
    lines = open(out).read().splitlines()
    header = json.loads(lines[0])
    assert header["task_id"] == 0 and header["k"] == 1


def test_train_and_eval_and_ablate(workspace, tmp_path, capsys):
    _, tasks, expert = workspace
    run = str(tmp_path / "run")
    assert main(["train", "--tasks", tasks, "--expert", expert, "--out", run,
                 "--batch-size", "8", "--warmup-steps", "10",
                 "--replay-capacity", "100", "--updates-per-env-step", "0.02",
                 "--max-episodes", "3", "--max-episode-steps", "10",
                 "--hidden-dim", "8", "--mlp-dims", "8,6"]) == 0
    ck = os.path.join(run, "checkpoint_final.bin")
    assert os.path.exists(ck)
    capsys.readouterr()

    # eval reconstructs the trained architecture from the checkpoint header
    out_csv = str(tmp_path / "eval.csv")
    assert main(["eval", "--tasks", tasks, "--checkpoint", ck,
                 "--out", out_csv, "--max-episode-steps", "5"]) == 0
    assert len(open(out_csv).read().splitlines()) == 3
    capsys.readouterr()

    # a corrupt checkpoint must fail loudly
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"\x00not a checkpoint\n")
    assert main(["eval", "--tasks", tasks, "--checkpoint", str(bad),
                 "--out", out_csv]) == 2
    assert "checkpoint" in capsys.readouterr().err

    # no-expert training requires the flag
    assert main(["train", "--tasks", tasks, "--out", str(tmp_path / "run2"),
                 "--max-episodes", "1"]) == 2
    capsys.readouterr()

    # ablate marks missing checkpoints absent instead of failing
    out_ab = str(tmp_path / "ablate.csv")
    assert main(["ablate", "--tasks", tasks, "--variant", "missing=/nope.bin",
                 "--max-episode-steps", "5", "--out", out_ab]) == 0
    rows = open(out_ab).read().splitlines()
    assert rows[0].startswith("variant")
    assert rows[1].startswith("missing,1")


def test_bench_writes_json(tmp_path, capsys):
    out = str(tmp_path / "bench.json")
    assert main(["bench", "--out", out, "--reps", "20"]) == 0
    rec = json.load(open(out))
    assert "policy_latency" in rec
    assert rec["policy_latency"]["n"] == 20


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
