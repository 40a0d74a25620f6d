import json

import pytest

from leaper.cli import EXIT_CONFIG, EXIT_OK, EXIT_PLANNER, EXIT_TRAINING, main
from leaper.util import read_csv, sha256_file

TINY = [
    "--set", "ddpg.hidden=[8,8]",
    "--set", "ddpg.batch_size=16",
    "--set", "ddpg.updates_per_cycle=2",
    "--set", "train.eval_interval=2",
    "--set", "train.eval_episodes=2",
]


def run(tmp_path, name, *args):
    out = tmp_path / name
    return main([*args, "--out", str(out)]), out


def test_plan_writes_outputs_and_manifest(tmp_path):
    code, out = run(tmp_path, "p", "plan", "--layout", "reduced", "--seeds", "0")
    assert code == EXIT_OK
    schema, rows = read_csv(out / "plans.csv")
    assert schema == "plan_summary/v1" and rows[0]["seed"] == "0"
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"plans.csv", "trajectory_seed_0.json"}
    for rel, digest in manifest["outputs"].items():
        assert sha256_file(out / rel) == digest
    assert manifest["config"]["layout"] == "reduced"
    assert "0" in manifest["rng_states"]


def test_plan_csv_is_byte_identical_on_repeat(tmp_path):
    _, a = run(tmp_path, "a", "plan", "--layout", "reduced", "--seeds", "1")
    _, b = run(tmp_path, "b", "plan", "--layout", "reduced", "--seeds", "1")
    for name in ("plans.csv", "trajectory_seed_1.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["train", "--alpha", "1.5", "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["status"] == "error" and err["exit_code"] == 2
    assert any("alpha" in e for e in err["details"])
    assert main(["plan", "--set", "nodot=1"]) == EXIT_CONFIG
    assert main(["plan", "--layout", "/missing/layout.yaml", "--out", str(tmp_path / "m")]) == EXIT_CONFIG
    assert (tmp_path / "m" / "error.json").exists()
    assert main(["not-a-command"]) == EXIT_CONFIG


def test_planner_failure_exits_3(tmp_path):
    code, out = run(tmp_path, "f", "plan", "--layout", "reduced", "--set", "planner.max_iterations=3")
    assert code == EXIT_PLANNER
    assert json.loads((out / "error.json").read_text())["details"]["iterations"] == 3


def test_train_then_evaluate_and_training_failure(tmp_path):
    code, out = run(tmp_path, "t", "train", "--layout", "reduced", "--alpha", "0", "--episodes", "4", *TINY)
    assert code == EXIT_OK
    _, rows = read_csv(out / "curve_seed_0.csv")
    assert [r["episode"] for r in rows] == ["2", "4"]
    ckpt = out / "checkpoint_seed_0.npz"
    before = sha256_file(ckpt)
    code, ev = run(tmp_path, "e", "evaluate", "--layout", "reduced", "--set", f"evaluate.checkpoint={ckpt}", "--set", "evaluate.episodes=2")
    assert code == EXIT_OK
    assert read_csv(ev / "evaluation.csv")[1][0]["episodes"] == "2"
    assert sha256_file(ckpt) == before
    # A one-object checkpoint cannot drive a three-object layout.
    code, _ = run(tmp_path, "bad", "evaluate", "--layout", "2", "--set", f"evaluate.checkpoint={ckpt}")
    assert code == EXIT_TRAINING


def test_evaluate_requires_checkpoint(tmp_path):
    code, _ = run(tmp_path, "e", "evaluate", "--layout", "reduced")
    assert code == EXIT_CONFIG


def test_config_file_is_not_mutated_and_flags_win(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("layout: reduced\nseeds: 5\nmodel: weld\n")
    before = cfg.read_bytes()
    code, out = run(tmp_path, "c", "plan", "--config", str(cfg), "--model", "quasistatic")
    assert code == EXIT_OK
    assert cfg.read_bytes() == before
    _, rows = read_csv(out / "plans.csv")
    assert rows[0]["seed"] == "5" and rows[0]["model"] == "quasistatic"


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("LEAPER_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["plan", "--layout", "reduced"]) == EXIT_OK
    assert (tmp_path / "root" / "plan" / "plans.csv").exists()


@pytest.mark.parametrize("controller", ["open_loop", "velocity_feedback"])
def test_baseline_command(tmp_path, controller):
    code, out = run(
        tmp_path, controller, "baseline", "--layout", "reduced", "--set", f"baseline.controller={controller}", "--set", "baseline.trials=3"
    )
    assert code == EXIT_OK
    _, rows = read_csv(out / "baseline.csv")
    assert rows[0]["controller"] == controller and rows[0]["trials"] == "3"
