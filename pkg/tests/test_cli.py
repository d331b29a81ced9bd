import csv
import json

import numpy as np
import pytest

from relevis.cli import main
from relevis.volume import read_volume


def _manifest(path):
    return json.loads((path / "manifest.json").read_text(encoding="utf-8"))


class TestPipelineArtifacts:
    def test_phantom_gen_outputs(self, pipeline_dirs):
        gen = pipeline_dirs["gen"]
        manifest = _manifest(gen)
        assert manifest["command"] == "phantom-gen"
        assert manifest["seed"] == 5
        assert set(manifest) == {"command", "config", "config_hash", "seed",
                                 "artifacts", "timings"}
        assert "catalog.json" in manifest["artifacts"]
        assert "phantom_spec.json" in manifest["artifacts"]
        assert len(manifest["config_hash"]) == 64
        catalog = json.loads((gen / "catalog.json").read_text())
        assert len(catalog["subjects"]) == 16
        groups = [s["group"] for s in catalog["subjects"]]
        assert groups.count("CN") == 6
        assert groups.count("MCI") == 4
        assert groups.count("AD") == 6
        vol = read_volume(gen / catalog["subjects"][0]["volume"])
        assert vol.dims == (16, 16, 16)
        spec_doc = json.loads((gen / "phantom_spec.json").read_text())
        assert spec_doc["counts"] == [6, 4, 6]

    def test_residualize_rewrites_catalog(self, pipeline_dirs):
        res = pipeline_dirs["res"]
        catalog = json.loads((res / "catalog.json").read_text())
        assert len(catalog["subjects"]) == 16
        for entry in catalog["subjects"]:
            assert (res / entry["volume"]).exists()

    def test_train_outputs(self, pipeline_dirs):
        train = pipeline_dirs["train"]
        history = json.loads((train / "history.json").read_text())
        assert len(history["epochs"]) == 2
        assert history["config"]["epochs"] == 2
        assert history["config"]["augmentation"] is False
        metrics = json.loads((train / "metrics.json").read_text())
        assert 0.0 <= metrics["auc_ad_cn"] <= 1.0
        split = json.loads((train / "split.json").read_text())
        assert not set(split["train_ids"]) & set(split["test_ids"])
        assert len(split["mci_ids"]) == 4
        catalog = json.loads((train / "catalog.json").read_text())
        assert {"id": "model", "path": "model.bin"} in catalog["models"]
        assert (train / "model.bin").exists()
        assert (train / "manifest.json").exists()

    def test_phantom_gen_is_deterministic(self, pipeline_dirs, tmp_path):
        again = tmp_path / "again"
        rc = main(["phantom-gen", "--out", str(again), "--counts", "6", "4", "6",
                   "--dims", "16", "16", "16", "--seed", "5"])
        assert rc == 0
        gen = pipeline_dirs["gen"]
        a = (gen / "volumes" / "s0001.nii").read_bytes()
        b = (again / "volumes" / "s0001.nii").read_bytes()
        assert a == b
        assert _manifest(again)["config_hash"] == _manifest(gen)["config_hash"]

    def test_config_hash_tracks_flags(self, pipeline_dirs, tmp_path):
        other = tmp_path / "other"
        rc = main(["phantom-gen", "--out", str(other), "--counts", "6,4,6",
                   "--dims", "16,16,16", "--seed", "4"])
        assert rc == 0
        assert _manifest(other)["config_hash"] != \
            _manifest(pipeline_dirs["gen"])["config_hash"]


class TestDownstreamCommands:
    def test_evaluate(self, pipeline_dirs, tmp_path):
        train = pipeline_dirs["train"]
        out = tmp_path / "eval"
        rc = main(["evaluate", "--catalog", str(train / "catalog.json"),
                   "--model", str(train / "model.bin"), "--out", str(out)])
        assert rc == 0
        payload = json.loads((out / "evaluation.json").read_text())
        assert len(payload["subjects"]) == 16
        for key in ("auc_ad_cn", "auc_mci_cn"):
            assert 0.0 <= payload[key] <= 1.0
        assert set(payload["metrics_ad"]) == {"sensitivity", "specificity",
                                              "balanced_accuracy", "ppv",
                                              "npv", "f1"}
        assert isinstance(payload["youden_threshold_ad"], float)
        report = (out / "report.txt").read_text()
        assert "auc" in report and "AD vs CN" in report

    def test_relevance(self, pipeline_dirs, tmp_path):
        train = pipeline_dirs["train"]
        out = tmp_path / "rel"
        rc = main(["relevance", "--catalog", str(train / "catalog.json"),
                   "--model", str(train / "model.bin"), "--subject", "s0001",
                   "--out", str(out)])
        assert rc == 0
        summary = json.loads((out / "relevance_s0001.json").read_text())
        assert summary["subject_id"] == "s0001"
        assert "conservation_ratio" in summary
        assert set(summary["region_relevance"]) == {"0", "1", "2", "3", "4"}
        vol = read_volume(out / "relevance_s0001_c1.nii")
        assert vol.dims == (16, 16, 16)

    def test_region_stats_without_model(self, pipeline_dirs, tmp_path):
        gen = pipeline_dirs["gen"]
        out = tmp_path / "rs"
        rc = main(["region-stats", "--catalog", str(gen / "catalog.json"),
                   "--region", "target_core", "--out", str(out)])
        assert rc == 0
        payload = json.loads((out / "region_stats.json").read_text())
        assert payload["region_id"] == 1
        assert payload["region_name"] == "target_core"
        assert len(payload["subjects"]) == 16
        assert "auc_ad_cn" in payload
        assert "correlation" not in payload
        assert not (out / "scatter.csv").exists()

    def test_region_stats_with_model(self, pipeline_dirs, tmp_path):
        train = pipeline_dirs["train"]
        out = tmp_path / "rsm"
        rc = main(["region-stats", "--catalog", str(train / "catalog.json"),
                   "--region", "1", "--model", str(train / "model.bin"),
                   "--out", str(out)])
        assert rc == 0
        payload = json.loads((out / "region_stats.json").read_text())
        assert set(payload["correlation"]) == {"r", "t", "p", "n"}
        assert payload["correlation"]["n"] == 16
        with open(out / "scatter.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["id", "group", "volume_ml", "relevance_sum"]
        assert len(rows) == 17
        # repr round trip keeps the value exact
        subject = payload["subjects"][0]
        assert float(rows[1][2]) == subject["volume_ml"]

    def test_occlusion(self, pipeline_dirs, tmp_path):
        train = pipeline_dirs["train"]
        out = tmp_path / "occ"
        rc = main(["occlusion", "--catalog", str(train / "catalog.json"),
                   "--model", str(train / "model.bin"), "--subject", "s0002",
                   "--cube", "8", "--stride", "8", "--out", str(out)])
        assert rc == 0
        payload = json.loads((out / "occlusion_s0002.json").read_text())
        assert payload["cube_edge"] == 8
        assert payload["stride"] == 8
        assert payload["reduction"] == 0.5
        assert len(payload["max_drop_coord"]) == 3
        prob = read_volume(out / "occlusion_prob_s0002.nii")
        assert prob.dims == (16, 16, 16)
        assert (out / "occlusion_relevance_s0002.nii").exists()

    def test_cross_validate_sequential_and_threaded_agree(self, pipeline_dirs,
                                                          tmp_path):
        res = pipeline_dirs["res"]
        args = ["cross-validate", "--catalog", str(res / "catalog.json"),
                "--k", "2", "--epochs", "1", "--no-augment", "--seed", "1"]
        seq = tmp_path / "seq"
        thr = tmp_path / "thr"
        assert main(args + ["--out", str(seq)]) == 0
        assert main(args + ["--out", str(thr), "--jobs", "2"]) == 0
        a = json.loads((seq / "folds.json").read_text())
        b = json.loads((thr / "folds.json").read_text())
        assert a["folds"] == b["folds"]
        assert len(a["folds"]) == 2
        assert 0.0 <= a["auc_ad_cn_mean"] <= 1.0
        assert a["auc_ad_cn_sd"] >= 0.0
        report = (seq / "report.txt").read_text()
        assert "fold" in report
        assert "+/-" in report


class TestConfigFile:
    def test_config_supplies_flags_and_explicit_wins(self, pipeline_dirs, tmp_path):
        res = pipeline_dirs["res"]
        out = tmp_path / "cfgtrain"
        cfg = tmp_path / "train.json"
        cfg.write_text(json.dumps({
            "catalog": str(res / "catalog.json"),
            "out": str(out),
            "epochs": 1,
            "no-augment": True,
            "holdout-fraction": 0.25,
        }))
        rc = main(["train", "--config", str(cfg), "--seed", "5"])
        assert rc == 0
        manifest = _manifest(out)
        assert manifest["config"]["epochs"] == 1
        assert manifest["config"]["seed"] == 5
        history = json.loads((out / "history.json").read_text())
        assert len(history["epochs"]) == 1

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"epochs": 1, "optimizer": "sgd"}))
        rc = main(["train", "--config", str(cfg)])
        assert rc == 1
        assert "optimizer" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(["train", "--config", str(tmp_path / "absent.json")])
        assert rc == 1
        assert "cannot read config" in capsys.readouterr().err

    def test_config_cannot_replace_required_flags_elsewhere(self, tmp_path, capsys):
        # train accepts catalog/out from config, but without either source
        # the command must fail cleanly
        rc = main(["train", "--epochs", "1"])
        assert rc == 1
        err = capsys.readouterr().err
        assert "--catalog" in err


class TestErrorPaths:
    def test_unknown_flag_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["phantom-gen", "--out", "x", "--bogus"])
        assert exc.value.code == 2

    def test_unknown_command_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_domain_error_exits_one(self, tmp_path, capsys):
        rc = main(["phantom-gen", "--out", str(tmp_path / "x"),
                   "--counts", "1,2"])
        assert rc == 1
        assert "relevis: error:" in capsys.readouterr().err

    def test_bad_bind_exits_one(self, tmp_path, capsys):
        rc = main(["serve", "--catalog", str(tmp_path / "none.json"),
                   "--bind", "8000"])
        assert rc == 1
        assert "HOST:PORT" in capsys.readouterr().err

    def test_missing_catalog_file(self, tmp_path, capsys):
        rc = main(["fit-residualizer", "--catalog", str(tmp_path / "no.json"),
                   "--out", str(tmp_path / "o")])
        assert rc == 1
