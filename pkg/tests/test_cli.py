"""End-to-end CLI behavior: artifacts, exit codes, determinism, config
precedence, and fault injection."""

import json

import numpy as np
import pytest

from anml.cli import main


def run(argv):
    return main(argv)


@pytest.fixture
def blob_csv(tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for label, center in (("A", 0.0), ("B", 60.0)):
        for _ in range(12):
            x = rng.normal(center, 0.5, size=2)
            rows.append(f"{float(x[0])!r},{float(x[1])!r},{label}")
    path = tmp_path / "blobs.csv"
    path.write_text("\n".join(rows) + "\n")
    return path


class TestTrain:
    def test_linear_end_to_end(self, tmp_path):
        out = tmp_path / "run"
        code = run(["train", "--dataset", "iris", "--learner", "lanml-minus",
                    "--gamma1", "-1", "--gamma2", "1", "--trials", "2",
                    "--seed", "7", "--max-iters", "20", "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert {"mean", "std", "best_k_histogram", "trials", "metadata",
                "dataset", "learner"} <= set(summary)
        assert (out / "manifest.json").exists()
        assert (out / "metric.json").exists()
        lines = (out / "trials.csv").read_text().splitlines()
        assert lines[0] == "trial,k,accuracy"
        trace = (out / "trace.csv").read_text().splitlines()
        assert trace[0] == "iter,loss,step,grad_norm"

    def test_determinism_byte_identical(self, tmp_path):
        args = ["train", "--dataset", "iris", "--learner", "lanml-minus",
                "--trials", "2", "--seed", "3", "--max-iters", "15"]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run(args + ["--out", str(out1)]) == 0
        assert run(args + ["--out", str(out2)]) == 0
        assert (out1 / "summary.json").read_bytes() == \
            (out2 / "summary.json").read_bytes()

    def test_gamma2_validation(self, tmp_path):
        code = run(["train", "--dataset", "iris", "--learner", "lanml-minus",
                    "--gamma2", "-1", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_missing_dataset(self, tmp_path):
        code = run(["train", "--dataset", "missing.csv", "--learner",
                    "identity", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_embedding_learner(self, tmp_path):
        out = tmp_path / "emb"
        code = run(["train", "--learner", "danml", "--steps", "50",
                    "--seed", "0", "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["loss_final"] < summary["loss_initial"]
        assert (out / "embeddings.json").exists()
        assert (out / "trace.csv").read_text().startswith("step,loss")

    @pytest.mark.parametrize("learner", ["triplet", "ms", "lifted", "npairs"])
    def test_every_batch_loss_trains(self, tmp_path, learner):
        out = tmp_path / learner
        code = run(["train", "--learner", learner, "--steps", "30",
                    "--seed", "1", "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["loss_final"] <= summary["loss_initial"]

    def test_preset_applies_defaults_flags_override(self, tmp_path):
        out = tmp_path / "p"
        code = run(["train", "--dataset", "iris", "--learner", "lanml-minus",
                    "--preset", "paper-uci", "--trials", "2",
                    "--max-iters", "10", "--out", str(out)])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["preset"] == "paper-uci"
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["trials"]) == 2  # flag beat the preset's 30


class TestConfigFile:
    def test_precedence_flags_over_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"trials": 2, "max_iters": 10,
                                   "learner": "identity"}))
        out = tmp_path / "r1"
        code = run(["train", "--dataset", "iris", "--config", str(cfg),
                    "--trials", "3", "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["trials"]) == 3

    def test_config_supplies_values(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"trials": 2, "max_iters": 10}))
        out = tmp_path / "r2"
        code = run(["train", "--dataset", "iris", "--learner", "identity",
                    "--config", str(cfg), "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["trials"]) == 2

    def test_unknown_keys_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"not_a_key": 1}))
        code = run(["train", "--dataset", "iris", "--learner", "identity",
                    "--config", str(cfg), "--out", str(tmp_path / "x")])
        assert code == 2


class TestAnalyze:
    def test_separable_blobs(self, blob_csv, tmp_path):
        out = tmp_path / "an"
        code = run(["analyze", "--dataset", str(blob_csv), "--similars", "3",
                    "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["fraction"] == 0.0
        assert report["delta"] > 0
        assert report["lipschitz_lower_bound"] == 1.0

    def test_interleaved_line(self, tmp_path):
        path = tmp_path / "line.csv"
        path.write_text("0.0,A\n2.0,A\n1.0,B\n1.1,B\n")
        out = tmp_path / "an2"
        code = run(["analyze", "--dataset", str(path), "--similars", "1",
                    "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["fraction"] > 0.0

    def test_empty_dataset(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        code = run(["analyze", "--dataset", str(path),
                    "--out", str(tmp_path / "x")])
        assert code == 2


class TestEval:
    def test_identity_eval(self, tmp_path):
        out = tmp_path / "ev"
        code = run(["eval", "--dataset", "iris", "--seed", "2",
                    "--k-max", "10", "--out", str(out)])
        assert code == 0
        result = json.loads((out / "result.json").read_text())
        assert result["best_accuracy"] > 0.9

    def test_stored_metric_round_trip(self, tmp_path):
        train_out = tmp_path / "tr"
        assert run(["train", "--dataset", "iris", "--learner", "lanml-minus",
                    "--trials", "1", "--max-iters", "10",
                    "--out", str(train_out)]) == 0
        out = tmp_path / "ev2"
        code = run(["eval", "--dataset", "iris",
                    "--metric", str(train_out / "metric.json"),
                    "--out", str(out)])
        assert code == 0


class TestLosscheck:
    def test_default_passes(self, capsys):
        assert run(["losscheck", "--only", "prop"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        assert all(line.startswith("PASS") for line in lines)

    def test_only_filter(self, capsys):
        assert run(["losscheck", "--only", "prop7"]) == 0
        out = capsys.readouterr().out
        assert "prop7" in out and "prop6" not in out

    def test_corrupted_gradient_fails_naming_the_loss(self, capsys):
        code = run(["losscheck", "--only", "danml_loss",
                    "--corrupt-gradient", "danml_loss"])
        assert code == 1
        captured = capsys.readouterr()
        assert "FAIL" in captured.out and "danml_loss" in captured.err

    def test_bad_filter(self):
        assert run(["losscheck", "--only", "zzz"]) == 2


class TestFetch:
    def test_fetch_from_file_url(self, tmp_path):
        src = tmp_path / "data.csv"
        src.write_text("0.0,A\n1.0,B\n")
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps({
            "toy": {"url": src.as_uri(), "filename": "toy.csv",
                    "format": "csv_last_label", "sha256": None}
        }))
        code = run(["fetch", "toy", "--cache", str(tmp_path / "cache"),
                    "--manifest", str(manifest)])
        assert code == 0
        assert (tmp_path / "cache" / "toy.csv").exists()

    def test_no_names(self, tmp_path):
        assert run(["fetch", "--cache", str(tmp_path)]) == 2
