"""End-to-end command tests through the typer app."""
import json

import numpy as np
import pandas as pd
import pytest
import typer
from typer.testing import CliRunner

from creakbench import __version__
from creakbench.cli import app, parse_beta_grid
from creakbench.creak import CreakCalibration
from creakbench.flow import FlowModel
from creakbench.manifest import read_embeddings, read_manifest

runner = CliRunner()


def invoke(*args: str):
    return runner.invoke(app, [str(a) for a in args])


def loglik_values(output: str) -> list[float]:
    return [float(line.split("\t")[1]) for line in output.splitlines() if "\t" in line]


def test_version():
    result = invoke("--version")
    assert result.exit_code == 0
    assert f"creakbench {__version__}" in result.output


class TestBetaGrid:
    def test_default(self):
        assert parse_beta_grid("default")[0] == -1.25
        assert len(parse_beta_grid(None)) == 11

    def test_range(self):
        assert parse_beta_grid("-0.5:0.5:0.25") == (-0.5, -0.25, 0.0, 0.25, 0.5)

    def test_list(self):
        assert parse_beta_grid("0, 1.5") == (0.0, 1.5)

    def test_invalid(self):
        with pytest.raises(typer.BadParameter):
            parse_beta_grid("1:0:0.5")


class TestCorr:
    def test_perfect_line(self, tmp_path):
        pitch = np.linspace(100.0, 200.0, 6)
        pd.DataFrame({"mean_pitch_hz": pitch, "creak_prob": 2 * pitch / 1000}).to_csv(tmp_path / "f.csv", index=False)
        result = invoke("corr", "--features", tmp_path / "f.csv", "--out", tmp_path / "r.csv", "--group-by", "overall")
        assert result.exit_code == 0, result.output
        report = pd.read_csv(tmp_path / "r.csv")
        assert report["group"].tolist() == ["overall"]
        assert report["R"].iloc[0] == pytest.approx(1.0)

    def test_missing_column(self, tmp_path):
        pd.DataFrame({"mean_pitch_hz": [1.0, 2.0]}).to_csv(tmp_path / "f.csv", index=False)
        result = invoke("corr", "--features", tmp_path / "f.csv", "--out", tmp_path / "r.csv")
        assert result.exit_code == 2
        assert "creak_prob" in result.output


    def test_histogram(self, tmp_path):
        rng = np.random.default_rng(0)
        gender = ["male"] * 10 + ["female"] * 10
        pitch = np.concatenate([rng.uniform(90, 150, 10), rng.uniform(170, 240, 10)])
        creak = np.clip(1.2 - pitch / 200.0 + 0.05 * rng.standard_normal(20), 0.0, 1.0)
        pd.DataFrame({"gender": gender, "mean_pitch_hz": pitch, "creak_prob": creak}).to_csv(tmp_path / "f.csv", index=False)
        result = invoke(
            "corr", "--features", tmp_path / "f.csv", "--out", tmp_path / "r.csv",
            "--histogram", tmp_path / "h.csv", "--bins", "4",
        )
        assert result.exit_code == 0, result.output
        hist = pd.read_csv(tmp_path / "h.csv")
        assert list(hist.columns) == ["group", "creaky", "bin_lo", "bin_hi", "count"]
        assert len(hist) == 16
        assert sorted(hist["group"].unique()) == ["female", "male"]
        assert hist.groupby("group")["count"].sum().tolist() == [10, 10]
        assert hist["bin_lo"].min() == pytest.approx(pitch.min())


class TestCalibrate:
    def write_features(self, path, n, source="external"):
        rng = np.random.default_rng(1)
        data = pd.DataFrame({
            "mean_pitch_hz": rng.uniform(90, 250, n),
            "h1h2_db": rng.normal(6, 3, n),
            "hnr_db": rng.normal(15, 4, n),
            "cpp_db": rng.normal(15, 3, n),
            "jitter_pct": rng.uniform(0.2, 2.0, n),
        })
        data["creak_prob"] = 1.0 / (1.0 + np.exp((data["mean_pitch_hz"] - 170.0) / 30.0))
        data["creak_source"] = source
        data.to_csv(path, index=False)

    def test_writes_calibration(self, tmp_path):
        self.write_features(tmp_path / "f.csv", 40)
        result = invoke("calibrate", "--features", tmp_path / "f.csv", "--out", tmp_path / "c.txt")
        assert result.exit_code == 0, result.output
        calib = CreakCalibration.load(tmp_path / "c.txt")
        assert calib.weights["pitch"] < 0
        assert calib.means["pitch"] == pytest.approx(pd.read_csv(tmp_path / "f.csv")["mean_pitch_hz"].mean())

    def test_proxy_rows_are_ignored_by_default(self, tmp_path):
        self.write_features(tmp_path / "f.csv", 40, source="proxy")
        result = invoke("calibrate", "--features", tmp_path / "f.csv", "--out", tmp_path / "c.txt")
        assert result.exit_code == 2
        assert not (tmp_path / "c.txt").exists()
        result = invoke("calibrate", "--features", tmp_path / "f.csv", "--out", tmp_path / "c.txt", "--all-rows")
        assert result.exit_code == 0, result.output

    def test_too_few_rows(self, tmp_path):
        self.write_features(tmp_path / "f.csv", 19)
        result = invoke("calibrate", "--features", tmp_path / "f.csv", "--out", tmp_path / "c.txt")
        assert result.exit_code == 2


class TestEer:
    def write_trials(self, path, labels):
        scores = [0.9, 0.8, 0.1, 0.2]
        pd.DataFrame({"score": scores, "same_speaker": labels}).to_csv(path, index=False)
        return path

    def test_separable_trials(self, tmp_path):
        trials = self.write_trials(tmp_path / "t.csv", [1, 1, 0, 0])
        result = invoke("eer", "--trials", trials, "--out", tmp_path / "e.csv")
        assert result.exit_code == 0, result.output
        curve = pd.read_csv(tmp_path / "e.csv")
        assert curve["eer"].tolist() == [0.0]
        assert curve["n_target"].tolist() == [2]

    def test_single_class(self, tmp_path):
        trials = self.write_trials(tmp_path / "t.csv", [1, 1, 1, 1])
        assert invoke("eer", "--trials", trials, "--out", tmp_path / "e.csv").exit_code == 2

    def test_missing_label_column(self, tmp_path):
        pd.DataFrame({"score": [0.1, 0.2]}).to_csv(tmp_path / "t.csv", index=False)
        assert invoke("eer", "--trials", tmp_path / "t.csv", "--out", tmp_path / "e.csv").exit_code == 2

    def test_needs_an_input(self, tmp_path):
        assert invoke("eer", "--out", tmp_path / "e.csv").exit_code == 2


class TestFlowCommands:
    def train(self, data, model):
        return invoke(
            "flow", "train", "--data", data, "--model", model,
            "--epochs", "2", "--hidden", "8", "--steps", "20", "--batch-size", "30", "--lr", "0.001", "--seed", "3",
        )

    def test_train_then_loglik(self, flow_data, tmp_path):
        model_path = tmp_path / "m.flow"
        assert self.train(flow_data, model_path).exit_code == 0
        result = invoke("flow", "loglik", "--model", model_path, "--data", flow_data)
        assert result.exit_code == 0, result.output
        values = loglik_values(result.output)
        assert len(values) == 60
        assert -np.mean(values) == pytest.approx(FlowModel.load(model_path).final_nll, abs=1e-6)

    def test_training_is_reproducible(self, flow_data, tmp_path):
        self.train(flow_data, tmp_path / "a.flow")
        self.train(flow_data, tmp_path / "b.flow")
        assert (tmp_path / "a.flow").read_bytes() == (tmp_path / "b.flow").read_bytes()

    def test_zero_shift_manipulation_is_identity(self, flow_data, tmp_path):
        self.train(flow_data, tmp_path / "m.flow")
        out = tmp_path / "shifted.jsonl"
        result = invoke("flow", "manipulate", "--model", tmp_path / "m.flow", "--data", flow_data,
                        "--out", out, "--beta-grid=0,0.5")
        assert result.exit_code == 0, result.output
        original = read_embeddings(flow_data)
        shifted = read_embeddings(out)
        assert len(shifted) == 120
        zero = shifted.betas == 0.0
        assert np.allclose(shifted.embeddings[zero], original.embeddings, atol=1e-4)

    def test_sample(self, flow_data, tmp_path):
        self.train(flow_data, tmp_path / "m.flow")
        out = tmp_path / "samples.jsonl"
        result = invoke("flow", "sample", "--model", tmp_path / "m.flow", "--attrs", "0,0,0,0,0,0.5",
                        "--n", "5", "--out", out)
        assert result.exit_code == 0, result.output
        assert read_embeddings(out).embeddings.shape == (5, 2)

    def test_corrupt_model(self, flow_data, tmp_path):
        (tmp_path / "bad.flow").write_bytes(b"not a model\n")
        result = invoke("flow", "loglik", "--model", tmp_path / "bad.flow", "--data", flow_data)
        assert result.exit_code == 2

    def test_dimension_mismatch(self, flow_data, embeddings_file, tmp_path):
        self.train(flow_data, tmp_path / "m.flow")
        wide = embeddings_file("wide.jsonl", np.ones((3, 3)), np.zeros((3, 6)))
        result = invoke("flow", "loglik", "--model", tmp_path / "m.flow", "--data", wide)
        assert result.exit_code == 2

    def test_too_few_samples(self, embeddings_file, tmp_path):
        data = embeddings_file("few.jsonl", np.ones((5, 2)), np.zeros((5, 6)))
        result = invoke("flow", "train", "--data", data, "--model", tmp_path / "m.flow", "--epochs", "1")
        assert result.exit_code == 2


def test_synthexp_writes_reproducible_report(tmp_path):
    args = [
        "synthexp", "--speakers", "20", "--utterances", "5", "--dim", "3", "--epochs", "1",
        "--steps", "4", "--hidden", "8", "--beta-grid=-0.5,0,0.5", "--seed", "1",
    ]
    first = invoke(*args, "--out", tmp_path / "a", "--export-corpus")
    assert first.exit_code == 0, first.output
    report = pd.read_csv(tmp_path / "a" / "report.csv")
    assert len(report) == 9
    assert list(report.columns) == ["system", "beta", "eer", "pitch_slope"]
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert isinstance(summary["paper_pattern"], bool)
    assert len(read_embeddings(tmp_path / "a" / "corpus.jsonl")) == 100

    second = invoke(*args, "--out", tmp_path / "b")
    assert second.exit_code == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_bad_seed_env(monkeypatch, tmp_path):
    monkeypatch.setenv("CREAKBENCH_SEED", "x")
    result = invoke("synthexp", "--out", tmp_path / "o", "--speakers", "20", "--dim", "3", "--epochs", "1")
    assert result.exit_code == 2


class TestAdapt:
    def test_missing_gender(self, corpus_factory, tmp_path):
        manifest = corpus_factory(tmp_path / "c", [{"id": "a", "speaker_id": "s"}, {"id": "b", "speaker_id": "s"}])
        result = invoke("adapt", "--manifest", manifest, "--out", tmp_path / "out")
        assert result.exit_code == 2
        assert "gender" in result.output

    def test_worker_count_does_not_change_output(self, small_corpus, tmp_path):
        for workers, name in ((1, "one"), (2, "two")):
            result = invoke("adapt", "--manifest", small_corpus, "--out", tmp_path / name,
                            "--seed", "4", "--workers", str(workers))
            assert result.exit_code == 0, result.output
        one, two = (tmp_path / "one" / "manifest.jsonl"), (tmp_path / "two" / "manifest.jsonl")
        assert one.read_bytes() == two.read_bytes()
        assert [r.id for r in read_manifest(one)] == ["m1", "m2", "f1", "f2"]

    def test_reference_preset(self, small_corpus, tmp_path):
        result = invoke("adapt", "--manifest", small_corpus, "--out", tmp_path / "out", "--preset", "reference",
                        "--b", "0", "--keep-labels")
        assert result.exit_code == 0, result.output
        assert (tmp_path / "out" / "adapt_records.jsonl").is_file()


class TestAnalyze:
    def test_missing_audio_is_skipped(self, corpus_factory, tmp_path):
        manifest = corpus_factory(tmp_path / "c", [
            {"id": "a", "speaker_id": "s", "gender": "male", "f0": 120.0},
            {"id": "b", "speaker_id": "s", "gender": "male", "missing": True},
            {"id": "c", "speaker_id": "t", "gender": "female", "f0": 200.0, "creak_prob": 0.8},
        ])
        result = invoke("analyze", "--manifest", manifest, "--out", tmp_path / "f.csv")
        assert result.exit_code == 0, result.output
        features = pd.read_csv(tmp_path / "f.csv")
        assert features["id"].tolist() == ["a", "c"]
        assert features.set_index("id").loc["c", "creak_source"] == "external"

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "m.jsonl").write_text("")
        result = invoke("analyze", "--manifest", tmp_path / "m.jsonl", "--out", tmp_path / "f.csv")
        assert result.exit_code == 0
        assert (tmp_path / "f.csv").read_text().startswith("id,speaker_id,gender,mean_pitch_hz")


def test_init_copies_example(monkeypatch, tmp_path):
    (tmp_path / "creakbench.yaml.example").write_text("seed: 5\n")
    monkeypatch.setattr("creakbench.commands.init.CONFIG_DIR", tmp_path)
    assert invoke("init").exit_code == 0
    assert (tmp_path / "creakbench.yaml").read_text() == "seed: 5\n"
    (tmp_path / "creakbench.yaml").write_text("seed: 6\n")
    invoke("init")
    assert (tmp_path / "creakbench.yaml").read_text() == "seed: 6\n"
