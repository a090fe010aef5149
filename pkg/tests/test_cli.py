"""Command-line interface tests.

Every subcommand runs in-process through `main(argv)` so exit codes,
printed output and on-disk artifacts can be asserted without spawning
interpreters. Training invocations use the tiny backbone at width 8 and
one or two epochs: they exercise wiring and artifact layout, not accuracy.
"""

import io
import json
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import pytest

from toolact.cli import main


def run_cli(argv):
    """Invoke the CLI in-process, returning (exit code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def read_run_manifest(directory: Path) -> dict:
    return json.loads((directory / "run_manifest.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="module")
def synth_result(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_synth")
    code, stdout, stderr = run_cli(
        ["synth", "--out", out, "--objects", 1, "--reps", 3, "--seed", 5, "--check-oracle"]
    )
    return out, code, stdout


class TestSynth:
    def test_exit_code_and_summary(self, synth_result):
        out, code, stdout = synth_result
        assert code == 0
        assert f"wrote 48 samples (288 images) to {out}" in stdout
        assert "oracle joint accuracy: 1.0000 over 48 samples" in stdout

    def test_artifacts(self, synth_result):
        out, _, _ = synth_result
        assert (out / "manifest.jsonl").is_file()
        assert (out / "generator.json").is_file()
        assert len(list(out.rglob("*.png"))) == 288
        manifest = read_run_manifest(out)
        assert manifest["subcommand"] == "synth"
        assert manifest["resolved_config"] == {"objects": 1, "reps": 3, "seed": 5}
        assert manifest["seeds"] == [5]
        assert manifest["config_hash"]

    def test_rerun_is_byte_identical(self, synth_result, tmp_path):
        out, _, _ = synth_result
        code, _, _ = run_cli(["synth", "--out", tmp_path, "--objects", 1, "--reps", 3, "--seed", 5])
        assert code == 0
        assert (tmp_path / "manifest.jsonl").read_bytes() == (out / "manifest.jsonl").read_bytes()
        originals = {p.relative_to(out): p for p in sorted(out.rglob("*.png"))}
        copies = {p.relative_to(tmp_path): p for p in sorted(tmp_path.rglob("*.png"))}
        assert set(copies) == set(originals)
        for rel, path in copies.items():
            assert path.read_bytes() == originals[rel].read_bytes(), rel

    @pytest.mark.parametrize("flags", [("--objects", 0), ("--objects", 21), ("--reps", 0), ("--reps", 11)])
    def test_range_violations_exit_2(self, tmp_path, flags):
        code, _, stderr = run_cli(["synth", "--out", tmp_path, *flags])
        assert code == 2
        assert "error:" in stderr
        assert not (tmp_path / "run_manifest.json").exists()

    def test_requires_output_directory(self, monkeypatch):
        monkeypatch.delenv("TOOLACT_DATA_ROOT", raising=False)
        code, _, stderr = run_cli(["synth"])
        assert code == 2
        assert "TOOLACT_DATA_ROOT" in stderr

    def test_env_root_used_when_no_flag(self, monkeypatch, tmp_path):
        monkeypatch.setenv("TOOLACT_DATA_ROOT", str(tmp_path))
        code, stdout, _ = run_cli(["synth", "--objects", 1, "--reps", 1])
        assert code == 0
        assert (tmp_path / "manifest.jsonl").is_file()
        assert "wrote 16 samples (96 images)" in stdout


@pytest.fixture(scope="module")
def data_root(small_dataset):
    return small_dataset.root


@pytest.fixture(scope="module")
def train_result(data_root, tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("cli_train") / "run1"
    code, stdout, stderr = run_cli(
        ["train", "--data", data_root, "--task", "tools+actions", "--arch", "1c1n",
         "--backbone", "tiny", "--tiny-width", 8, "--epochs", 2, "--out", run_dir]
    )
    return run_dir, code, stdout


class TestTrain:
    def test_exit_code_and_messages(self, train_result):
        run_dir, code, stdout = train_result
        assert code == 0
        assert f"run dir: {run_dir}" in stdout
        assert "best epoch" in stdout
        assert "val_joint=" in stdout

    def test_run_directory_layout(self, train_result):
        run_dir, _, _ = train_result
        for name in ("run_manifest.json", "config.json", "history.csv", "best.pt", "final.pt"):
            assert (run_dir / name).is_file(), name
        manifest = read_run_manifest(run_dir)
        assert manifest["subcommand"] == "train"
        assert manifest["resolved_config"]["task"] == "tools+actions"
        assert manifest["resolved_config"]["epochs"] == 2

    def test_history_has_one_row_per_epoch(self, train_result):
        run_dir, _, _ = train_result
        lines = (run_dir / "history.csv").read_text(encoding="utf-8").strip().splitlines()
        assert lines[0].startswith("epoch,")
        assert len(lines) == 1 + 2

    def test_env_data_root_and_default_run_dir(self, data_root, monkeypatch):
        monkeypatch.setenv("TOOLACT_DATA_ROOT", str(data_root))
        code, stdout, _ = run_cli(
            ["train", "--task", "tools+actions", "--arch", "1c1n",
             "--tiny-width", 8, "--epochs", 1]
        )
        assert code == 0
        expected = data_root / "runs" / "tools-actions_1c1n_tiny_seed0"
        assert (expected / "best.pt").is_file()
        assert str(expected) in stdout

    def test_missing_task_exits_2(self, data_root):
        code, _, stderr = run_cli(["train", "--data", data_root, "--arch", "1c1n"])
        assert code == 2
        assert "--task is required" in stderr

    def test_missing_arch_exits_2(self, data_root):
        code, _, stderr = run_cli(["train", "--data", data_root, "--task", "tools"])
        assert code == 2
        assert "--arch is required" in stderr

    def test_unknown_arch_rejected_by_parser(self, data_root):
        with pytest.raises(SystemExit) as exc:
            with redirect_stderr(io.StringIO()):
                main(["train", "--data", str(data_root), "--task", "tools", "--arch", "7c7n"])
        assert exc.value.code == 2

    def test_missing_data_exits_2(self, monkeypatch):
        monkeypatch.delenv("TOOLACT_DATA_ROOT", raising=False)
        code, _, stderr = run_cli(["train", "--task", "tools", "--arch", "1c1n"])
        assert code == 2
        assert "no dataset directory" in stderr

    def test_data_without_manifest_exits_2(self, tmp_path):
        code, _, stderr = run_cli(
            ["train", "--data", tmp_path, "--task", "tools", "--arch", "1c1n"]
        )
        assert code == 2
        assert "manifest.jsonl" in stderr


class TestConfigFile:
    def test_file_supplies_settings_and_flags_override(self, data_root, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps(
            {"task": "tools", "arch": "1c1n", "tiny_width": 8, "epochs": 3}
        ))
        run_dir = tmp_path / "run"
        code, _, _ = run_cli(
            ["train", "--data", data_root, "--config", config, "--epochs", 1, "--out", run_dir]
        )
        assert code == 0
        manifest = read_run_manifest(run_dir)
        assert manifest["resolved_config"]["task"] == "tools"
        assert manifest["resolved_config"]["epochs"] == 1
        lines = (run_dir / "history.csv").read_text(encoding="utf-8").strip().splitlines()
        assert len(lines) == 1 + 1

    def test_unknown_key_exits_2(self, data_root, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"task": "tools", "arch": "1c1n", "learning": 0.1}))
        code, _, stderr = run_cli(["train", "--data", data_root, "--config", config])
        assert code == 2
        assert "unknown keys" in stderr

    def test_invalid_json_exits_2(self, data_root, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text("not json {")
        code, _, stderr = run_cli(["train", "--data", data_root, "--config", config])
        assert code == 2
        assert "not valid JSON" in stderr

    def test_non_object_json_exits_2(self, data_root, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text("[1, 2]")
        code, _, stderr = run_cli(["train", "--data", data_root, "--config", config])
        assert code == 2
        assert "JSON object" in stderr

    def test_missing_file_exits_2(self, data_root):
        code, _, stderr = run_cli(
            ["train", "--data", data_root, "--config", "/nonexistent/cfg.json"]
        )
        assert code == 2
        assert "config file not found" in stderr


@pytest.fixture(scope="module")
def eval_result(data_root, train_result):
    run_dir, code, _ = train_result
    assert code == 0, "training fixture failed"
    code, stdout, stderr = run_cli(
        ["eval", "--checkpoint", run_dir / "best.pt", "--data", data_root, "--split", "test"]
    )
    return run_dir / "eval_test", code, stdout


class TestEval:
    def test_exit_code_and_output(self, eval_result):
        out_dir, code, stdout = eval_result
        assert code == 0
        assert f"report: {out_dir / 'report.json'}" in stdout
        assert "tool=" in stdout and "action=" in stdout and "joint=" in stdout

    def test_report_contents(self, eval_result):
        out_dir, _, _ = eval_result
        report = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
        assert report["architecture"] == "1c1n"
        assert report["architecture_display"] == "Shared-central (1C-1N)"
        assert report["backbone"] == "tiny"
        assert report["headline_metric"] == "joint"
        assert report["split"] == "test"
        assert set(report["accuracies"]) == {"tool", "action", "joint"}
        assert report["n"] == 64

    def test_confusion_artifacts(self, eval_result):
        out_dir, _, _ = eval_result
        for head in ("tool", "action"):
            assert (out_dir / f"confusion_{head}.csv").is_file()
            assert (out_dir / f"confusion_{head}.png").is_file()
        assert read_run_manifest(out_dir)["subcommand"] == "eval"

    def test_missing_checkpoint_exits_1(self, data_root, tmp_path):
        code, _, stderr = run_cli(
            ["eval", "--checkpoint", tmp_path / "missing.pt", "--data", data_root]
        )
        assert code == 1
        assert "error:" in stderr


class TestReport:
    def test_table_from_eval_report(self, eval_result, tmp_path):
        report_json, _, _ = eval_result
        out = tmp_path / "table"
        code, stdout, _ = run_cli(["report", "--inputs", report_json / "report.json", "--out", out])
        assert code == 0
        text = (out / "results.txt").read_text(encoding="utf-8")
        assert "Shared-central (1C-1N)" in text
        assert "(n=1)" in text
        assert (out / "results.csv").is_file()
        assert "Shared-central (1C-1N)" in stdout

    def test_duplicate_configs_aggregate(self, eval_result, tmp_path):
        report_json = eval_result[0] / "report.json"
        out = tmp_path / "table"
        code, _, _ = run_cli(["report", "--inputs", report_json, report_json, "--out", out])
        assert code == 0
        csv_lines = (out / "results.csv").read_text(encoding="utf-8").strip().splitlines()
        assert len(csv_lines) == 2
        assert csv_lines[1].split(",")[2] == "2"

    def test_input_missing_key_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"architecture_display": "x", "backbone": "tiny"}))
        code, _, stderr = run_cli(["report", "--inputs", bad, "--out", tmp_path / "t"])
        assert code == 2
        assert "eval subcommand" in stderr

    def test_nonexistent_input_exits_2(self, tmp_path):
        code, _, stderr = run_cli(
            ["report", "--inputs", tmp_path / "nope.json", "--out", tmp_path / "t"]
        )
        assert code == 2
        assert "not found" in stderr


class TestGrid:
    def test_reduced_grid_writes_trials(self, data_root, tmp_path):
        out = tmp_path / "grid"
        code, stdout, _ = run_cli(
            ["grid", "--data", data_root, "--task", "tools", "--arch", "1c1n",
             "--tiny-width", 8, "--epochs", 1, "--reduced", "--out", out]
        )
        assert code == 0
        lines = (out / "trials.csv").read_text(encoding="utf-8").strip().splitlines()
        assert len(lines) == 1 + 4
        assert "best: lr=" in stdout
        assert read_run_manifest(out)["subcommand"] == "grid"


class TestRepro:
    def test_micro_repro_end_to_end(self, tmp_path):
        out = tmp_path / "repro"
        code, stdout, _ = run_cli(
            ["repro", "--out", out, "--objects", 1, "--reps", 5, "--seeds", 1,
             "--epochs", 1, "--tiny-width", 8]
        )
        assert code == 0
        assert (out / "data" / "manifest.jsonl").is_file()
        table = (out / "report" / "results.txt").read_text(encoding="utf-8")
        for display in ("Stacked-channels (3C-1N)", "Separate (3C-6N)", "Shared (3C-3N)",
                        "Separate-central (1C-2N)", "Shared-central (1C-1N)"):
            assert display in table
        ablation = (out / "report" / "ablation" / "results.txt").read_text(encoding="utf-8")
        assert "dual heads (tools+actions)" in ablation
        assert "single joint16 head" in ablation
        assert read_run_manifest(out)["subcommand"] == "repro"
        assert "[4/4] writing report" in stdout

    def test_zero_seeds_exits_2(self, tmp_path):
        code, _, stderr = run_cli(["repro", "--out", tmp_path / "r", "--seeds", 0])
        assert code == 2
        assert "--seeds" in stderr
