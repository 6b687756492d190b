import csv
import json

import pytest

from nmfk_mlp import mlp
from nmfk_mlp.cli import main

# tiny corpora cannot cover all seven window classes
pytestmark = pytest.mark.filterwarnings("ignore:classes absent")

FAST_SCAN = ["--k-min", "1", "--k-max", "7", "--ensemble", "4", "--max-iter", "60"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny generated corpus, its scans and a model trained on them."""
    root = tmp_path_factory.mktemp("cli")
    corpus, scans, model = root / "corpus", root / "scans", root / "model.json"
    assert main(["generate", "--count", "4", "--k-min", "2", "--k-max", "4", "--n-min", "20", "--n-max", "24",
                 "--seed", "1", "--out", str(corpus)]) == 0
    assert main(["scan", "--corpus", str(corpus), "--out", str(scans), *FAST_SCAN]) == 0
    assert main(["train", "--scans", str(scans), "--out", str(model), "--max-epochs", "3", "--holdout", "0.25"]) == 0
    return root


class TestGenerate:
    def test_manifest(self, tmp_path, capsys):
        out = tmp_path / "d"
        assert main(["generate", "--count", "10", "--k-min", "2", "--k-max", "6", "--n-min", "20", "--n-max", "30",
                     "--seed", "1", "--out", str(out)]) == 0
        entries = json.loads((out / "manifest.json").read_text())["matrices"]
        assert len(entries) == 10 and len(list(out.glob("matrix_*.csv"))) == 10
        assert all(2 <= e["k_true"] <= 6 for e in entries)
        first = (out / "manifest.json").read_bytes()
        main(["generate", "--count", "10", "--k-min", "2", "--k-max", "6", "--n-min", "20", "--n-max", "30",
              "--seed", "1", "--out", str(out)])
        assert (out / "manifest.json").read_bytes() == first
        assert "wrote 10" in capsys.readouterr().out

    def test_empty(self, tmp_path):
        assert main(["generate", "--count", "0", "--out", str(tmp_path / "e")]) == 0
        assert json.loads((tmp_path / "e" / "manifest.json").read_text()) == {"matrices": []}

    def test_bad_flags(self, tmp_path, capsys):
        assert main(["generate", "--count", "2", "--k-min", "5", "--k-max", "3", "--out", str(tmp_path)]) == 1
        assert "error" in capsys.readouterr().err


class TestScan:
    def test_single_matrix_stdout(self, workspace, capsys):
        assert main(["scan", "--input", str(workspace / "corpus" / "matrix_0000.csv"), *FAST_SCAN]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert [json.loads(line)["k"] for line in lines] == list(range(1, 8))

    def test_corpus_files(self, workspace):
        assert len(list((workspace / "scans").glob("*.jsonl"))) == 4
        assert (workspace / "scans" / "manifest.json").exists()

    def test_deterministic(self, workspace, tmp_path):
        out = tmp_path / "s.jsonl"
        main(["scan", "--input", str(workspace / "corpus" / "matrix_0001.csv"), "--out", str(out), *FAST_SCAN])
        assert out.read_bytes() == (workspace / "scans" / "matrix_0001.jsonl").read_bytes()

    def test_malformed_csv(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n3,oops\n")
        assert main(["scan", "--input", str(bad), "--k-min", "1", "--k-max", "1"]) == 2
        assert "bad.csv:2" in capsys.readouterr().err

    def test_negative_entries(self, tmp_path):
        bad = tmp_path / "neg.csv"
        bad.write_text("1,2\n3,-4\n")
        assert main(["scan", "--input", str(bad), "--k-min", "1", "--k-max", "1"]) == 2

    def test_range_check(self, workspace, capsys):
        src = str(workspace / "corpus" / "matrix_0000.csv")
        assert main(["scan", "--input", src, "--k-min", "6", "--k-max", "5"]) == 1
        assert main(["scan", "--input", src, "--k-min", "1", "--k-max", "500"]) == 2

    def test_usage_error_exit_code(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["scan", "--bogus"])
        assert info.value.code == 1


class TestTrain:
    def test_model_file(self, workspace, tmp_path, capsys):
        model = mlp.load(workspace / "model.json")
        assert model.layer_dims == [21, 300, 200, 100, 7]
        assert model.metadata["epochs_trained"] <= 3
        out = tmp_path / "m.json"
        assert main(["train", "--scans", str(workspace / "scans"), "--out", str(out), "--max-epochs", "1",
                     "--holdout", "0.25"]) == 0
        assert mlp.load(out).metadata["epochs_trained"] == 1
        assert "accuracy" in capsys.readouterr().out

    def test_retrain_identical(self, workspace, tmp_path):
        out = tmp_path / "m.json"
        main(["train", "--scans", str(workspace / "scans"), "--out", str(out), "--max-epochs", "3",
              "--holdout", "0.25"])
        assert out.read_bytes() == (workspace / "model.json").read_bytes()

    def test_training_csv(self, workspace, tmp_path):
        table = tmp_path / "windows.csv"
        main(["train", "--scans", str(workspace / "scans"), "--out", str(tmp_path / "m.json"), "--max-epochs", "1",
              "--training-csv", str(table)])
        rows = list(csv.reader(table.open()))
        assert len(rows[0]) == 23 and len(rows) == 1 + 4

    def test_missing_scans(self, workspace, tmp_path):
        assert main(["train", "--scans", str(workspace / "corpus"), "--out", str(tmp_path / "m.json")]) == 2


class TestPredict:
    def test_mlp_report(self, workspace, tmp_path, capsys):
        out = tmp_path / "r.json"
        assert main(["predict", "--input", str(workspace / "corpus" / "matrix_0000.csv"), "--model",
                     str(workspace / "model.json"), "--out", str(out), *FAST_SCAN]) == 0
        report = json.loads(out.read_text())
        assert report["method_tag"] == "mlp-vote"
        assert "k_predicted" in capsys.readouterr().out
        assert report["scan"] == [json.loads(line) for line in
                                  (workspace / "scans" / "matrix_0000.jsonl").read_text().splitlines()]

    def test_aic_method(self, workspace, capsys):
        assert main(["predict", "--scan-file", str(workspace / "scans" / "matrix_0000.jsonl"),
                     "--method", "aic"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["method_tag"] == "aic-argmin" and report["votes"] == []

    def test_missing_model(self, workspace, tmp_path, capsys):
        missing = tmp_path / "absent.json"
        assert main(["predict", "--scan-file", str(workspace / "scans" / "matrix_0000.jsonl"),
                     "--model", str(missing)]) == 2
        assert "absent.json" in capsys.readouterr().err

    def test_normalization_mismatch(self, workspace, tmp_path, capsys):
        model = mlp.load(workspace / "model.json")
        model.feature_normalization_tag = "other"
        path = tmp_path / "other.json"
        mlp.save(model, path)
        assert main(["predict", "--scan-file", str(workspace / "scans" / "matrix_0000.jsonl"),
                     "--model", str(path)]) == 2
        assert "other" in capsys.readouterr().err


class TestEvaluate:
    def test_tables(self, workspace, tmp_path):
        out = tmp_path / "eval.csv"
        assert main(["evaluate", "--corpus", str(workspace / "corpus"), "--scans", str(workspace / "scans"),
                     "--model", str(workspace / "model.json"), "--out", str(out), *FAST_SCAN]) == 0
        rows = list(csv.DictReader(out.open()))
        assert sum(r["kind"] == "prediction" for r in rows) == 12
        assert sorted(r["method"] for r in rows if r["kind"] == "summary") == [
            "aic-argmin", "mlp-vote", "silhouette-threshold"]
        assert (tmp_path / "eval_confusion.csv").exists()

    def test_single_matrix_two_methods(self, workspace, tmp_path):
        out = tmp_path / "eval.csv"
        assert main(["evaluate", "--corpus", str(workspace / "corpus"), "--scans", str(workspace / "scans"),
                     "--range", "0:1", "--methods", "aic", "silhouette", "--out", str(out), *FAST_SCAN]) == 0
        rows = list(csv.DictReader(out.open()))
        assert [r["kind"] for r in rows].count("summary") == 2
        one = tmp_path / "one.csv"
        main(["evaluate", "--corpus", str(workspace / "corpus"), "--scans", str(workspace / "scans"),
              "--range", "0:1", "--methods", "aic", "--out", str(one), *FAST_SCAN])
        assert [r["kind"] for r in csv.DictReader(one.open())] == ["prediction", "summary"]

    def test_mlp_needs_model(self, workspace, tmp_path):
        assert main(["evaluate", "--corpus", str(workspace / "corpus"), "--out", str(tmp_path / "e.csv")]) == 1


def test_inputs_not_mutated(workspace, tmp_path):
    src = workspace / "corpus" / "matrix_0002.csv"
    before = src.read_bytes()
    main(["predict", "--input", str(src), "--method", "silhouette", *FAST_SCAN])
    assert src.read_bytes() == before
