"""End-to-end CLI workflows: exit codes, idempotency, file outputs."""

import json

import pytest

from reducr.cli import main
from reducr.config import config_keys

BASE_CFG = """\
spec_version = 1
c = 4
d = 6
n_train = 400
n_holdout = 300
n_test = 200
separation = 2.5
label_noise = 0.05
data_seed = 3
large_batch = 32
select_k = 4
steps = 20
eval_every = 5
learning_rate = 0.2
expert_steps = 120
expert_batch = 32
expert_lr = 0.3
gamma = 9
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Config file, generated dataset, and trained experts shared by tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.cfg"
    cfg.write_text(BASE_CFG)
    data_dir = root / "data"
    assert main(["generate-data", "--config", str(cfg), "--out", str(data_dir)]) == 0
    experts_dir = root / "experts"
    assert main([
        "train-experts", "--config", str(cfg),
        "--data", str(data_dir / "manifest.json"), "--out", str(experts_dir),
    ]) == 0
    return {"root": root, "cfg": cfg, "data": data_dir / "manifest.json",
            "experts": experts_dir}


class TestGenerateData:
    def test_outputs_exist_with_expected_counts(self, workspace):
        manifest = json.loads(workspace["data"].read_text())
        assert manifest["counts"] == {"train": 400, "holdout": 300, "test": 200}
        csv_lines = (workspace["root"] / "data" / "pool.csv").read_text().splitlines()
        assert len(csv_lines) == 1 + 900

    def test_same_seed_byte_identical(self, workspace, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["generate-data", "--config", str(workspace["cfg"]),
                         "--out", str(out)]) == 0
        assert (a / "pool.csv").read_bytes() == (b / "pool.csv").read_bytes()
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()

    def test_c1_rejected_naming_field(self, workspace, tmp_path, capsys):
        code = main(["generate-data", "--config", str(workspace["cfg"]),
                     "--set", "c=1", "--out", str(tmp_path / "x")])
        assert code == 1
        err = capsys.readouterr().err
        assert "error: usage:" in err
        assert "c" in err

    def test_refuses_overwrite_without_force(self, workspace, capsys):
        code = main(["generate-data", "--config", str(workspace["cfg"]),
                     "--out", str(workspace["root"] / "data")])
        assert code == 1
        assert "--force" in capsys.readouterr().err

    def test_force_overwrites_deterministically(self, workspace, tmp_path):
        out = tmp_path / "re"
        main(["generate-data", "--config", str(workspace["cfg"]), "--out", str(out)])
        before = (out / "pool.csv").read_bytes()
        assert main(["generate-data", "--config", str(workspace["cfg"]),
                     "--out", str(out), "--force"]) == 0
        assert (out / "pool.csv").read_bytes() == before


class TestTrainExperts:
    def test_five_checkpoints_for_c4(self, workspace):
        files = sorted(p.name for p in workspace["experts"].iterdir())
        assert files == ["expert_0.ckpt", "expert_1.ckpt", "expert_2.ckpt",
                         "expert_3.ckpt", "experts.json", "reference.ckpt"]

    def test_manifest_records_gamma(self, workspace):
        manifest = json.loads((workspace["experts"] / "experts.json").read_text())
        assert manifest["gamma"] == 9.0
        assert manifest["n_experts"] == 4
        assert "expert_seeds" in manifest

    def test_rerun_identical_checkpoints(self, workspace, tmp_path):
        out = tmp_path / "experts2"
        assert main(["train-experts", "--config", str(workspace["cfg"]),
                     "--data", str(workspace["data"]), "--out", str(out)]) == 0
        for name in ("expert_0.ckpt", "reference.ckpt"):
            assert (out / name).read_bytes() == \
                (workspace["experts"] / name).read_bytes()

    def test_missing_dataset_errors(self, workspace, tmp_path, capsys):
        code = main(["train-experts", "--config", str(workspace["cfg"]),
                     "--data", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "x")])
        assert code == 1
        assert "does not exist" in capsys.readouterr().err


class TestRun:
    def test_uniform_needs_no_experts(self, workspace, tmp_path):
        assert main(["run", "--config", str(workspace["cfg"]),
                     "--data", str(workspace["data"]), "--rule", "uniform",
                     "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "records_uniform_seed0.jsonl").exists()

    def test_reducr_without_experts_is_usage_error(self, workspace, tmp_path,
                                                   capsys):
        code = main(["run", "--config", str(workspace["cfg"]),
                     "--data", str(workspace["data"]), "--rule", "reducr",
                     "--out", str(tmp_path / "out")])
        assert code == 1
        assert "--experts" in capsys.readouterr().err

    def test_reducr_with_experts(self, workspace, tmp_path):
        assert main(["run", "--config", str(workspace["cfg"]),
                     "--data", str(workspace["data"]), "--rule", "reducr",
                     "--experts", str(workspace["experts"]),
                     "--out", str(tmp_path / "out")]) == 0

    def test_byte_identical_reruns(self, workspace, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert main(["run", "--config", str(workspace["cfg"]),
                         "--data", str(workspace["data"]), "--rule", "reducr",
                         "--experts", str(workspace["experts"]), "--seed", "7",
                         "--out", str(out)]) == 0
            outs.append((out / "records_reducr_seed7.jsonl").read_bytes())
        assert outs[0] == outs[1]

    def test_refuses_existing_record_file(self, workspace, tmp_path, capsys):
        out = tmp_path / "out"
        args = ["run", "--config", str(workspace["cfg"]),
                "--data", str(workspace["data"]), "--rule", "uniform",
                "--out", str(out)]
        assert main(args) == 0
        assert main(args) == 1
        assert "--force" in capsys.readouterr().err
        assert main(args + ["--force"]) == 0

    def test_bare_csv_dataset_with_schema_from_config(self, workspace, tmp_path):
        csv = workspace["root"] / "data" / "pool.csv"
        assert main(["run", "--config", str(workspace["cfg"]),
                     "--set", "train_frac=0.6", "--set", "holdout_frac=0.2",
                     "--set", "test_frac=0.2",
                     "--data", str(csv), "--rule", "uniform",
                     "--out", str(tmp_path / "out")]) == 0

    def test_runtime_error_exit_code(self, workspace, tmp_path, capsys):
        # experts trained for C=4 cannot serve a C=3 problem: the mismatch is
        # only caught at run time, inside the experiment
        code = main(["run", "--config", str(workspace["cfg"]),
                     "--set", "superclasses=0,0,1,1", "--set", "gamma=9",
                     "--rule", "reducr",
                     "--data", str(workspace["data"]),
                     "--experts", str(workspace["experts"]),
                     "--out", str(tmp_path / "out")])
        assert code == 2
        assert "error: runtime:" in capsys.readouterr().err


class TestSweep:
    def test_record_files_and_summary_rows(self, workspace, tmp_path):
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(workspace["cfg"]),
                     "--data", str(workspace["data"]),
                     "--experts", str(workspace["experts"]),
                     "--rules", "uniform,reducr", "--seeds", "0..4",
                     "--out", str(out)]) == 0
        records = sorted(p.name for p in out.glob("records_*.jsonl"))
        assert len(records) == 10
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["rows"]) == 2
        assert (out / "summary.txt").exists()

    def test_summary_matches_report_command(self, workspace, tmp_path, capsys):
        out = tmp_path / "sweep"
        main(["sweep", "--config", str(workspace["cfg"]),
              "--data", str(workspace["data"]),
              "--rules", "uniform", "--seeds", "0,1",
              "--out", str(out)])
        capsys.readouterr()
        files = sorted(str(p) for p in out.glob("records_*.jsonl"))
        assert main(["report", "--summary", *files]) == 0
        table = capsys.readouterr().out
        assert (out / "summary.txt").read_text().strip() == table.strip()


class TestReport:
    def test_plots_written(self, workspace, tmp_path, capsys):
        out = tmp_path / "sweep"
        main(["run", "--config", str(workspace["cfg"]),
              "--data", str(workspace["data"]), "--rule", "reducr",
              "--experts", str(workspace["experts"]), "--out", str(out)])
        figs = tmp_path / "figs"
        record = out / "records_reducr_seed0.jsonl"
        assert main(["report", "--plots", str(record), "--out", str(figs)]) == 0
        assert (figs / "worst_class_accuracy.svg").exists()
        assert (figs / "weights_reducr.svg").exists()

    def test_report_needs_a_mode(self, capsys):
        assert main(["report"]) == 1
        assert "summary" in capsys.readouterr().err

    def test_plots_need_out(self, workspace, capsys):
        assert main(["report", "--plots", "x.jsonl"]) == 1
        assert "--out" in capsys.readouterr().err


class TestHelp:
    @pytest.mark.parametrize("command", ["run", "sweep"])
    def test_help_lists_every_config_key(self, command, capsys):
        with pytest.raises(SystemExit) as exc:
            main([command, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for key in config_keys():
            assert key in text, f"{command} --help is missing config key {key}"

    def test_generate_data_help_lists_its_keys(self, capsys):
        with pytest.raises(SystemExit):
            main(["generate-data", "--help"])
        text = capsys.readouterr().out
        for key in ("n_train", "separation", "label_noise", "data_seed"):
            assert key in text

    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err
