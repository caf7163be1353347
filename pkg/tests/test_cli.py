"""Tests for the command-line interface"""

import json
import re

import numpy as np
import pandas as pd
import pytest
from typer.testing import CliRunner

from gbmap import __version__
from gbmap.cli import EXIT_ARGUMENT, EXIT_DATA, app

runner = CliRunner()


@pytest.fixture
def synth_csv(tmp_path):
    """Small synth-cos regression CSV written by the synth command"""
    path = tmp_path / "synth.csv"
    result = runner.invoke(
        app, ["synth", "--kind", "cos", "--n", "150", "--p", "3", "--seed", "2", "--out", str(path)]
    )
    assert result.exit_code == 0, result.output
    return path


@pytest.fixture
def fitted_model(tmp_path, synth_csv):
    path = tmp_path / "model.json"
    result = runner.invoke(
        app,
        ["fit", "--data", str(synth_csv), "--target", "y", "--m", "3", "--out-model", str(path)],
    )
    assert result.exit_code == 0, result.output
    return path


def _write_csv(path, columns):
    pd.DataFrame(columns).to_csv(path, index=False)
    return path


def test_version():
    result = runner.invoke(app, ["version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_synth_is_deterministic(tmp_path):
    outputs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        args = ["synth", "--n", "200", "--p", "5", "--seed", "7", "--out", str(path)]
        assert runner.invoke(app, args).exit_code == 0
        outputs.append((path.read_bytes(), (tmp_path / f"{name}.json").read_bytes()))
    assert outputs[0] == outputs[1]


def test_fit_constant_target(tmp_path):
    rng = np.random.default_rng(0)
    data = _write_csv(
        tmp_path / "const.csv",
        {"x1": rng.normal(size=40), "x2": rng.normal(size=40), "y": np.full(40, 3.0)},
    )
    result = runner.invoke(
        app,
        [
            "fit", "--data", str(data), "--target", "y", "--m", "2", "--lambda", "0",
            "--out-model", str(tmp_path / "m.json"),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "task: regression (inferred)" in result.output
    loss = float(re.search(r"^stage 1: loss (\S+)$", result.output, re.M).group(1))
    assert loss < 1e-8
    assert "train r2" not in result.output


def test_fit_infers_classification(tmp_path):
    rng = np.random.default_rng(1)
    x = rng.normal(size=60)
    data = _write_csv(tmp_path / "c.csv", {"x1": x, "y": np.where(x > 0, 1, -1)})
    result = runner.invoke(
        app,
        ["fit", "--data", str(data), "--target", "y", "--m", "2", "--out-model", str(tmp_path / "m.json")],
    )
    assert result.exit_code == 0, result.output
    assert "task: classification (inferred)" in result.output
    assert "train accuracy" in result.output


def test_refit_differs_only_in_timestamp(tmp_path, synth_csv):
    payloads = []
    for name in ("first.json", "second.json"):
        path = tmp_path / name
        args = ["fit", "--data", str(synth_csv), "--target", "y", "--m", "2", "--out-model", str(path)]
        assert runner.invoke(app, args).exit_code == 0
        payload = json.loads(path.read_text())
        payload["provenance"].pop("fitted_at")
        payloads.append(payload)
    assert payloads[0] == payloads[1]


def test_predict_and_embed_agree(tmp_path, synth_csv, fitted_model):
    predictions = tmp_path / "pred.csv"
    embedding = tmp_path / "emb.csv"
    common = ["--model", str(fitted_model), "--data", str(synth_csv)]
    assert runner.invoke(app, ["predict", *common, "--out", str(predictions)]).exit_code == 0
    assert runner.invoke(app, ["embed", *common, "--out", str(embedding)]).exit_code == 0

    pred = pd.read_csv(predictions)
    emb = pd.read_csv(embedding)
    assert list(pred.columns) == ["prediction"]
    assert list(emb.columns) == ["f1", "f2", "f3"]
    np.testing.assert_allclose(emb.sum(axis=1), pred["prediction"], atol=1e-9)


def test_predict_to_stdout(synth_csv, fitted_model):
    result = runner.invoke(app, ["predict", "--model", str(fitted_model), "--data", str(synth_csv)])
    assert result.exit_code == 0
    assert "prediction" in result.output


def test_distance(tmp_path, synth_csv, fitted_model):
    out = tmp_path / "dist.csv"
    result = runner.invoke(
        app,
        [
            "distance", "--model", str(fitted_model), "--data", str(synth_csv),
            "--pair", "0,0", "--pair", "3,9", "--out", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    table = pd.read_csv(out)
    assert list(table.columns) == ["i", "j", "embedding_distance", "path_distance"]
    assert table.loc[0, "embedding_distance"] == 0.0
    assert table.loc[0, "path_distance"] == 0.0
    assert table.loc[1, "path_distance"] <= table.loc[1, "embedding_distance"] + 1e-5


def test_distance_rejects_malformed_pair(synth_csv, fitted_model):
    result = runner.invoke(
        app,
        ["distance", "--model", str(fitted_model), "--data", str(synth_csv), "--pair", "0;1"],
    )
    assert result.exit_code == EXIT_ARGUMENT


def test_explain_columns(tmp_path, synth_csv, fitted_model):
    out = tmp_path / "explain.csv"
    args = ["explain", "--model", str(fitted_model), "--data", str(synth_csv), "--out", str(out)]
    assert runner.invoke(app, args).exit_code == 0
    assert list(pd.read_csv(out).columns) == ["x1", "x2", "x3", "intercept"]


def test_predict_with_missing_column(tmp_path, fitted_model):
    data = _write_csv(tmp_path / "partial.csv", {"x1": [0.1, 0.2], "x3": [1.0, 2.0]})
    result = runner.invoke(app, ["predict", "--model", str(fitted_model), "--data", str(data)])
    assert result.exit_code == EXIT_DATA
    assert "error:" in result.output
    assert "'x2'" in result.output


def test_invalid_stage_count(tmp_path, synth_csv):
    result = runner.invoke(
        app,
        ["fit", "--data", str(synth_csv), "--target", "y", "--m", "0", "--out-model", str(tmp_path / "m.json")],
    )
    assert result.exit_code == EXIT_ARGUMENT


def test_invalid_beta(tmp_path, synth_csv):
    result = runner.invoke(
        app,
        [
            "fit", "--data", str(synth_csv), "--target", "y", "--beta", "0",
            "--out-model", str(tmp_path / "m.json"),
        ],
    )
    assert result.exit_code == EXIT_ARGUMENT


def test_missing_target_column(tmp_path, synth_csv):
    result = runner.invoke(
        app,
        ["fit", "--data", str(synth_csv), "--target", "label", "--out-model", str(tmp_path / "m.json")],
    )
    assert result.exit_code == EXIT_DATA
    assert "target column not found" in result.output


def test_corrupt_model_file(tmp_path, synth_csv):
    model = tmp_path / "bad.json"
    model.write_text("{}")
    result = runner.invoke(app, ["predict", "--model", str(model), "--data", str(synth_csv)])
    assert result.exit_code == EXIT_DATA


def test_drift_command(tmp_path):
    data = tmp_path / "drift.csv"
    args = ["synth", "--kind", "drift", "--n", "400", "--n-irrelevant", "2", "--out", str(data)]
    assert runner.invoke(app, args).exit_code == 0

    report_path = tmp_path / "report.json"
    result = runner.invoke(
        app,
        [
            "drift", "--data", str(data), "--target", "y", "--m", "3", "--maxiter", "50",
            "--out-report", str(report_path),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "gbmap auc:" in result.output

    report = json.loads(report_path.read_text())
    assert report["sizes"] == {"a1": 100, "a2": 100, "b": 200}
    assert report["dropped_feature"] in report["feature_magnitudes"]
    gbmap = report["gbmap"]
    assert len(gbmap["labels"]) == 300
    assert abs(sum(gbmap["labels"][:100]) - 5) <= 1

    roc = pd.read_csv(tmp_path / "report_roc_gbmap.csv")
    assert list(roc.columns) == ["fpr", "tpr"]
    assert np.all(np.diff(roc["fpr"]) >= 0)
    assert (tmp_path / "report_roc_euclid.csv").exists()


def test_benchmark_command(tmp_path, synth_csv):
    out = tmp_path / "bench.csv"
    result = runner.invoke(
        app,
        [
            "benchmark", "--data", str(synth_csv), "--target", "y", "--m", "3",
            "--repeats", "2", "--k", "5", "--out", str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    assert re.search(r"^mean r2 ", result.output, re.M)
    table = pd.read_csv(out)
    assert list(table["repeat"]) == [1, 2]
    assert "knn_gbmap" in table.columns


def test_benchmark_with_tuning(synth_csv):
    result = runner.invoke(
        app,
        [
            "benchmark", "--data", str(synth_csv), "--target", "y", "--repeats", "1",
            "--tune", "--budget", "1", "--folds", "2", "--knn-space", "--max-rows", "80",
            "--maxiter", "30",
        ],
    )
    assert result.exit_code == 0, result.output
    assert "tuned: m=" in result.output


@pytest.mark.slow
def test_vis_command(tmp_path):
    result = runner.invoke(app, ["vis", "--out-dir", str(tmp_path)])
    assert result.exit_code == 0, result.output
    for name in ("vis_embedding.csv", "vis_original.csv"):
        table = pd.read_csv(tmp_path / name)
        assert len(table) == 3000
        assert list(table.columns) == ["pc1", "pc2", "cluster"]


@pytest.mark.parametrize("quantile", ["0", "1"])
def test_drift_rejects_closed_quantile(tmp_path, quantile):
    data = tmp_path / "drift.csv"
    args = ["synth", "--kind", "drift", "--n", "64", "--n-irrelevant", "1", "--out", str(data)]
    assert runner.invoke(app, args).exit_code == 0
    result = runner.invoke(
        app,
        [
            "drift", "--data", str(data), "--target", "y", "--quantile", quantile,
            "--out-report", str(tmp_path / "report.json"),
        ],
    )
    assert result.exit_code == EXIT_ARGUMENT
    assert not (tmp_path / "report.json").exists()


def test_drift_along_named_feature(tmp_path):
    data = tmp_path / "drift.csv"
    args = ["synth", "--kind", "drift", "--n", "120", "--n-irrelevant", "2", "--out", str(data)]
    assert runner.invoke(app, args).exit_code == 0
    report_path = tmp_path / "report.json"
    common = [
        "drift", "--data", str(data), "--target", "y", "--m", "2", "--maxiter", "30",
        "--out-report", str(report_path),
    ]

    result = runner.invoke(app, [*common, "--feature", "noise_2"])
    assert result.exit_code == 0, result.output
    report = json.loads(report_path.read_text())
    assert report["dropped_feature"] == "noise_2"
    assert list(report["feature_magnitudes"]) == ["noise_2"]

    result = runner.invoke(app, [*common, "--feature", "missing"])
    assert result.exit_code == EXIT_ARGUMENT
    assert "drift feature not found" in result.output
