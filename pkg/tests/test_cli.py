import json

import numpy as np
import pytest
import yaml

from gaussianface import cli
from gaussianface.checks import CheckResult
from gaussianface.exceptions import NumericalFailure

SMALL = {
    "seed": 1,
    "data": {"n_pairs_matched": 20, "n_pairs_mismatched": 20, "P": 4, "F": 3},
    "model": {
        "prior": {"sigma": 1000.0},
        "outer_max": 2,
        "theta_scg": {"max_iter": 10},
        "z_scg": {"max_iter": 10},
    },
    "pipeline": {"fe_max_points": 60},
    "eval": {"k": 3, "sources": 1},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "small.yaml").write_text(yaml.safe_dump(SMALL))
    combined = dict(SMALL, pipeline={"mode": "combined", "fe_max_points": 60})
    (d / "combined.yaml").write_text(yaml.safe_dump(combined))
    assert cli.main(["synth", "--config", str(d / "small.yaml"), "--out", str(d / "data")]) == 0
    return d


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_synth_is_byte_identical(workdir, capsys):
    code, _ = run(capsys, "synth", "--config", workdir / "small.yaml", "--out", workdir / "again")
    assert code == 0
    for name in ("target.pairs", "source1.pairs"):
        assert (workdir / "data" / name).read_bytes() == (workdir / "again" / name).read_bytes()


def test_train_then_eval_model_reproduces_validation_accuracy(workdir, capsys):
    cfg, data, out = workdir / "small.yaml", workdir / "data", workdir / "m.json"
    code, res = run(capsys, "train", "--config", cfg, "--data", data, "--out", out)
    assert code == 0
    trained = float(res.out.split("validation_accuracy:")[1].split()[0])
    code, res = run(capsys, "eval", "--config", cfg, "--data", data, "--model", out, "--roc", workdir / "v.csv")
    assert code == 0
    assert abs(float(res.out.split("accuracy:")[1].split()[0]) - trained) <= 1e-12
    assert (workdir / "v.csv").read_text().startswith("fpr,tpr\n")
    # retraining writes the same document
    run(capsys, "train", "--config", cfg, "--data", data, "--out", workdir / "m2.json")
    assert out.read_bytes() == (workdir / "m2.json").read_bytes()


def test_kfold_report_and_roc(workdir, capsys):
    argv = ["eval", "--config", workdir / "small.yaml", "--data", workdir / "data"]
    code, res = run(capsys, *argv, "--report", workdir / "r.txt", "--roc", workdir / "r.csv")
    assert code == 0
    text = (workdir / "r.txt").read_text()
    assert "folds: 3" in text and "mean_accuracy:" in text and "auc:" in text
    run(capsys, *argv, "--roc", workdir / "r2.csv")
    assert (workdir / "r.csv").read_bytes() == (workdir / "r2.csv").read_bytes()


def test_combined_model_extract_and_cluster(workdir, capsys):
    cfg, data = workdir / "combined.yaml", workdir / "data"
    code, _ = run(capsys, "train", "--config", cfg, "--data", data, "--out", workdir / "c.json")
    assert code == 0
    pairs = data / "target.pairs"
    code, _ = run(capsys, "extract", "--model", workdir / "c.json", "--pairs", pairs, "--out", workdir / "f.csv")
    assert code == 0
    feats = np.loadtxt(workdir / "f.csv", delimiter=",")
    doc = json.loads((workdir / "c.json").read_text())
    C = len(doc["fe"]["codebook"]["weights"])
    assert feats.shape == (40, 4 * C * (2 * 2 + 2))
    code, res = run(capsys, "cluster", "--model", workdir / "c.json", "--out", workdir / "cl.json")
    assert code == 0
    out = json.loads((workdir / "cl.json").read_text())
    assert abs(sum(out["codebook"]["weights"]) - 1) <= 1e-10


def test_gradcheck_default_config_passes(capsys):
    code, res = run(capsys, "gradcheck")
    assert code == 0
    assert res.out.startswith("PASS gradient suite")


def test_selfcheck_failure_exit_code(monkeypatch, capsys):
    monkeypatch.setattr(cli, "selfcheck", lambda: [CheckResult("fake", False, 1.0, 0.5)])
    code, res = run(capsys, "selfcheck")
    assert code == cli.EXIT_CHECK
    assert "FAIL fake" in res.out


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["train", "--data", "nowhere"],
        ["eval", "--data", "/nonexistent"],
        ["extract", "--model", "/nonexistent.json", "--pairs", "x", "--out", "y"],
    ],
)
def test_usage_errors_exit_one(argv, capsys):
    assert run(capsys, *argv)[0] == cli.EXIT_USAGE


def test_bad_config_exits_one_with_field(workdir, capsys):
    bad = workdir / "bad.yaml"
    bad.write_text("model:\n  betta: 1\n")
    code, res = run(capsys, "synth", "--config", bad, "--out", workdir / "x")
    assert code == cli.EXIT_USAGE
    assert "model.betta" in res.err


def test_non_finite_input_exits_one(workdir, capsys):
    d = workdir / "nan"
    d.mkdir()
    lines = (workdir / "data" / "target.pairs").read_text().splitlines()
    tok = lines[2].split()
    tok[5] = "nan"
    lines[2] = " ".join(tok)
    (d / "target.pairs").write_text("\n".join(lines) + "\n")
    code, res = run(capsys, "train", "--config", workdir / "small.yaml", "--data", d, "--sources", 0, "--out", d / "m")
    assert code == cli.EXIT_USAGE
    assert "target.pairs:3" in res.err


def test_numerical_failure_exits_two(workdir, capsys, monkeypatch):
    def boom(*args, **kwargs):
        raise NumericalFailure("kernel matrix is not positive definite")

    monkeypatch.setattr(cli, "train_bc", boom)
    code, res = run(capsys, "train", "--config", workdir / "small.yaml", "--data", workdir / "data", "--out", workdir / "z")
    assert code == cli.EXIT_NUMERIC
    assert "numerical failure" in res.err
