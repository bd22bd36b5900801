"""The command-line interface, exercised in process through `entry`."""

import csv
import json

import numpy as np
import pytest

from btmuda import cli
from btmuda.diffcore import tensor as dt
from btmuda.evalmetrics import metrics_from_per_sample_csv

TOY_CONFIG = {
    "preset": "exp10",
    "seed": 7,
    "train": {"batch_size": 4, "checkpoint_every": 0},
    "model": {
        "m_sources": 2,
        "image_size": 16,
        "d_a": 8,
        "cnn": {"widths": [4, 8], "d_f": 8},
        "transformer": {"patch_size": 4, "d_model": 8, "n_heads": 2,
                        "n_layers": 2},
    },
    "schedule": {"iter_total": 4},
    "data": {
        "synthetic": {"m_sources": 2, "samples_per_domain": 12,
                      "eval_samples": 8, "image_size": 16, "seed": 0},
    },
}


def write_config(path, **overrides):
    doc = json.loads(json.dumps(TOY_CONFIG))
    for key, value in overrides.items():
        doc[key] = value
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


@pytest.fixture()
def toy_config(tmp_path):
    return write_config(tmp_path / "config.json")


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestGenSynth:
    def test_writes_tree_manifest_and_effective_config(self, tmp_path, toy_config,
                                                       capsys):
        out = tmp_path / "data"
        assert cli.entry(["gen-synth", "--config", toy_config,
                          "--out", str(out)]) == 0
        assert "T_eval/" in capsys.readouterr().out
        for name in ("S1", "S2", "T", "T_eval"):
            assert (out / name / "images").is_dir(), name
        for name in ("S1", "S2", "T_eval"):
            assert (out / name / "labels.csv").is_file(), name
        assert not (out / "T" / "labels.csv").exists()
        assert (out / "effective_config.json").is_file()

        manifest = json.loads((out / "manifest.json").read_text())
        by_id = {e["id"]: e for e in manifest["domains"]}
        assert set(by_id) == {"S1", "S2", "T"}
        splits = {(e["dir"], e["split"]) for e in manifest["domains"]}
        assert splits == {("S1", "train"), ("S2", "train"), ("T", "train"),
                          ("T_eval", "eval")}
        for e in manifest["domains"]:
            assert e["role"] == ("source" if e["id"].startswith("S") else "target")
            assert e["labeled"] == (e["dir"] != "T")
            assert set(e["style"]) == {"gain", "bias", "texture", "blur"}
        assert manifest["config"]["samples_per_domain"] == 12

    def test_regeneration_is_byte_identical(self, tmp_path, toy_config):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert cli.entry(["gen-synth", "--config", toy_config,
                              "--out", str(out)]) == 0
        for rel in ("manifest.json", "S1/labels.csv", "T_eval/labels.csv",
                    "S1/images/img_00000.png", "T/images/img_00005.png"):
            assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel

    def test_directory_config_cannot_generate(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", data={"directory": "/nonexistent"})
        assert cli.entry(["gen-synth", "--config", cfg,
                          "--out", str(tmp_path / "d")]) == 2
        assert "synthetic" in capsys.readouterr().err


class TestTrainCommand:
    def test_train_writes_log_checkpoint_and_config(self, tmp_path, toy_config):
        out = tmp_path / "run"
        assert cli.entry(["train", "--config", toy_config,
                          "--out", str(out)]) == 0
        rows = read_rows(out / "training_log.csv")
        assert len(rows) == 1 + 4  # header + one row per iteration
        assert (out / "checkpoint_final.bin").is_file()
        effective = json.loads((out / "effective_config.json").read_text())
        assert effective["preset"] == "exp10"
        assert effective["seed"] == 7
        assert effective["model"]["transformer"]["ffn_hidden"] == 32

    def test_two_runs_are_byte_identical(self, tmp_path, toy_config):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert cli.entry(["train", "--config", toy_config,
                              "--out", str(out)]) == 0
        assert ((out_a / "training_log.csv").read_bytes()
                == (out_b / "training_log.csv").read_bytes())
        assert ((out_a / "checkpoint_final.bin").read_bytes()
                == (out_b / "checkpoint_final.bin").read_bytes())

    def test_effective_config_reproduces_the_run(self, tmp_path, toy_config):
        first = tmp_path / "first"
        assert cli.entry(["train", "--config", toy_config,
                          "--out", str(first)]) == 0
        second = tmp_path / "second"
        assert cli.entry(["train", "--config",
                          str(first / "effective_config.json"),
                          "--out", str(second)]) == 0
        assert ((first / "checkpoint_final.bin").read_bytes()
                == (second / "checkpoint_final.bin").read_bytes())

    def test_train_from_generated_directory(self, tmp_path, toy_config):
        data = tmp_path / "data"
        assert cli.entry(["gen-synth", "--config", toy_config,
                          "--out", str(data)]) == 0
        out = tmp_path / "run"
        assert cli.entry(["train", "--config", toy_config, "--data", str(data),
                          "--out", str(out)]) == 0
        # The directory is pinned into the recorded config.
        effective = json.loads((out / "effective_config.json").read_text())
        assert effective["data"] == {"directory": str(data)}

    def test_resume_through_the_cli_is_bit_exact(self, tmp_path):
        cfg = write_config(tmp_path / "c.json",
                           train={"batch_size": 4, "checkpoint_every": 2})
        full, resumed = tmp_path / "full", tmp_path / "resumed"
        assert cli.entry(["train", "--config", cfg, "--out", str(full)]) == 0
        assert cli.entry(["train", "--config", cfg, "--out", str(resumed)]) == 0
        assert cli.entry(["train", "--config", cfg, "--out", str(resumed),
                          "--resume", str(resumed / "checkpoint_000002.bin")]) == 0
        for rel in ("checkpoint_final.bin", "training_log.csv"):
            assert (full / rel).read_bytes() == (resumed / rel).read_bytes(), rel

    def test_source_count_mismatch_is_a_config_error(self, tmp_path, capsys):
        single = {
            "m_sources": 1, "samples_per_domain": 12, "eval_samples": 8,
            "image_size": 16, "seed": 0,
        }
        cfg_m1 = write_config(tmp_path / "m1.json",
                              model={**TOY_CONFIG["model"], "m_sources": 1},
                              data={"synthetic": single})
        data = tmp_path / "data_m1"
        assert cli.entry(["gen-synth", "--config", cfg_m1,
                          "--out", str(data)]) == 0
        cfg_m2 = write_config(tmp_path / "m2.json")
        assert cli.entry(["train", "--config", cfg_m2, "--data", str(data),
                          "--out", str(tmp_path / "run")]) == 2
        assert "m_sources" in capsys.readouterr().err

    def test_unknown_config_key_names_the_path(self, tmp_path, capsys):
        doc = json.loads(json.dumps(TOY_CONFIG))
        doc["model"]["dropout"] = 0.5
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        assert cli.entry(["train", "--config", str(path),
                          "--out", str(tmp_path / "run")]) == 2
        assert "model.dropout" in capsys.readouterr().err

    def test_missing_config_file_is_an_io_error(self, tmp_path):
        assert cli.entry(["train", "--config", str(tmp_path / "nope.json"),
                          "--out", str(tmp_path / "run")]) == 3

    def test_malformed_json_is_a_config_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\"preset\": }")
        assert cli.entry(["train", "--config", str(path),
                          "--out", str(tmp_path / "run")]) == 2


@pytest.fixture(scope="class")
def trained(tmp_path_factory):
    """One toy gen-synth + train, shared by the read-only command tests."""
    base = tmp_path_factory.mktemp("trained")
    cfg = write_config(base / "config.json")
    data = base / "data"
    run = base / "run"
    assert cli.entry(["gen-synth", "--config", cfg, "--out", str(data)]) == 0
    assert cli.entry(["train", "--config", cfg, "--out", str(run)]) == 0
    return {"base": base, "config": cfg, "data": data, "run": run}


class TestEvalCommand:
    def test_eval_writes_consistent_reports(self, trained, tmp_path, capsys):
        report_dir = tmp_path / "report"
        assert cli.entry(["eval",
                          "--ckpt", str(trained["run"] / "checkpoint_final.bin"),
                          "--data", str(trained["data"] / "T_eval"),
                          "--report", str(report_dir),
                          "--config", trained["config"]]) == 0
        out = capsys.readouterr().out
        assert "ACC (%)" in out
        report = read_rows(report_dir / "report_fusion.csv")
        assert report[0] == ["acc_percent", "auc", "f1", "n", "mode"]
        redone = metrics_from_per_sample_csv(report_dir / "per_sample_fusion.csv")
        assert float(report[1][0]) == redone.acc_percent
        assert float(report[1][1]) == redone.auc
        assert float(report[1][2]) == redone.f1
        assert int(report[1][3]) == redone.n == 8

    def test_config_discovered_beside_the_checkpoint(self, trained, tmp_path):
        report_dir = tmp_path / "report"
        assert cli.entry(["eval",
                          "--ckpt", str(trained["run"] / "checkpoint_final.bin"),
                          "--data", str(trained["data"] / "T_eval"),
                          "--mode", "average",
                          "--report", str(report_dir)]) == 0
        assert (report_dir / "report_average.csv").is_file()
        assert (report_dir / "per_sample_average.csv").is_file()

    def test_unlabeled_domain_exits_five(self, trained, tmp_path):
        assert cli.entry(["eval",
                          "--ckpt", str(trained["run"] / "checkpoint_final.bin"),
                          "--data", str(trained["data"] / "T"),
                          "--report", str(tmp_path / "r")]) == 5

    def test_missing_checkpoint_exits_three(self, trained, tmp_path):
        assert cli.entry(["eval", "--ckpt", str(tmp_path / "none.bin"),
                          "--data", str(trained["data"] / "T_eval"),
                          "--report", str(tmp_path / "r"),
                          "--config", trained["config"]]) == 3

    def test_architecture_mismatch_exits_two(self, trained, tmp_path, capsys):
        wrong = write_config(
            tmp_path / "wide.json",
            model={**TOY_CONFIG["model"], "d_a": 16})
        assert cli.entry(["eval",
                          "--ckpt", str(trained["run"] / "checkpoint_final.bin"),
                          "--data", str(trained["data"] / "T_eval"),
                          "--report", str(tmp_path / "r"),
                          "--config", wrong]) == 2
        assert "incompatible" in capsys.readouterr().err


class TestExportFeaturesCommand:
    def test_export_writes_the_feature_table(self, trained, tmp_path):
        out = tmp_path / "features.csv"
        assert cli.entry(["export-features",
                          "--ckpt", str(trained["run"] / "checkpoint_final.bin"),
                          "--data", str(trained["data"] / "T_eval"),
                          "--out", str(out)]) == 0
        rows = read_rows(out)
        assert len(rows) == 1 + 8
        assert len(rows[0]) == 3 + 2 * 2 * 8  # id, domain, label, 2M*d_a features
        assert rows[1][1] == "T_eval"


class TestGradcheckCommand:
    def test_passes_on_the_healthy_model(self, capsys):
        assert cli.entry(["gradcheck", "--max-checks", "3"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out
        for name in ("distill", "consistency", "mmd", "restriction",
                     "classification", "total"):
            assert name in out
        for prefix in ("cnn/", "vit/", "heads/"):
            assert prefix in out

    def test_corrupted_gradient_exits_six(self, capsys, monkeypatch):
        real_log = dt.log

        def crooked_log(x):
            out = real_log(x)
            if out._parents:
                (parent, vjp), = out._parents
                out._parents = ((parent, lambda g, f=vjp: 1.5 * f(g)),)
            return out

        monkeypatch.setattr(dt, "log", crooked_log)
        assert cli.entry(["gradcheck", "--max-checks", "3"]) == 6
        assert "finite differences" in capsys.readouterr().err


class TestEnvironmentAndParsing:
    def test_thread_cap_must_be_a_positive_integer(self, monkeypatch):
        monkeypatch.setenv("BTMUDA_THREADS", "abc")
        assert cli.entry(["gradcheck", "--max-checks", "1"]) == 2
        monkeypatch.setenv("BTMUDA_THREADS", "0")
        assert cli.entry(["gradcheck", "--max-checks", "1"]) == 2

    def test_valid_thread_cap_is_accepted(self, monkeypatch, tmp_path, capsys):
        monkeypatch.setenv("BTMUDA_THREADS", "2")
        cfg = write_config(tmp_path / "c.json")
        assert cli.entry(["gen-synth", "--config", cfg,
                          "--out", str(tmp_path / "d")]) == 0
        capsys.readouterr()

    def test_interrupt_maps_to_130(self, monkeypatch):
        monkeypatch.setattr(cli, "main", lambda argv: (_ for _ in ()).throw(
            KeyboardInterrupt()))
        assert cli.entry([]) == 130

    def test_unknown_subcommand_is_a_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.entry(["frobnicate"])
        assert exc.value.code == 2
        capsys.readouterr()
