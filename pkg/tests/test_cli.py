import csv
import json
import subprocess
import sys

import pytest

from causalaffect.cli import build_parser, main

TINY = ["--set", "tcn.epochs=10", "--set", "tcn.kernel_size=4", "--set", "tcn.dilation_base=4", "--set", "lstm.max_epochs=3", "--set", "lstm.hidden=4"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "spec.json"
    spec.write_text(json.dumps({"n_domains": 2, "samples_per_domain": 5, "D": 8, "L": 30, "causal_indices": [1, 4], "lags": [1, 2], "weights": [0.8, -0.6], "spurious_indices": [6]}))
    assert main(["synth", "--spec", str(spec), "--out", str(root / "data")]) == 0
    return root


def _error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


def test_help_lists_every_subcommand():
    text = build_parser().format_help()
    for cmd in ("synth", "ingest-check", "abfs", "train", "predict", "grid", "report", "gradcheck"):
        assert cmd in text


def test_ingest_check(dataset, capsys):
    assert main(["ingest-check", str(dataset / "data" / "manifest.json")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_samples"] == 10 and report["domains"] == {"dom0": 5, "dom1": 5}
    assert main(["ingest-check", str(dataset / "missing.json")]) == 1


def test_abfs_train_predict(dataset, capsys, tmp_path):
    manifest = str(dataset / "data" / "manifest.json")
    assert main(["abfs", manifest, "--domain", "dom0", "--out", str(tmp_path / "sel"), *TINY]) == 0
    sel = json.loads((tmp_path / "sel" / "selection.json").read_text())
    assert sel["source_domain"] == "dom0" and sel["union"]
    ck = tmp_path / "model.json"
    assert main(["train", manifest, "--domain", "dom0", "--selection", str(tmp_path / "sel" / "selection.json"), "--out", str(ck), *TINY]) == 0
    assert main(["predict", str(ck), manifest, "--domain", "dom1", "--out", str(tmp_path / "pred.csv")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "pred.csv")))
    assert len(rows) == 5 * 30
    assert all(0 <= float(r["valence"]) <= 1 for r in rows)


def test_predict_width_mismatch(dataset, capsys, tmp_path):
    manifest = str(dataset / "data" / "manifest.json")
    (tmp_path / "sel.json").write_text(json.dumps({"union": [0, 1]}))
    ck = tmp_path / "m.json"
    assert main(["train", manifest, "--selection", str(tmp_path / "sel.json"), "--out", str(ck), *TINY]) == 0
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"n_domains": 1, "samples_per_domain": 2, "D": 5, "L": 10, "causal_indices": [1], "lags": [1], "weights": [1.0], "spurious_indices": []}))
    assert main(["synth", "--spec", str(other), "--out", str(tmp_path / "d5")]) == 0
    capsys.readouterr()
    assert main(["predict", str(ck), str(tmp_path / "d5" / "manifest.json"), "--out", str(tmp_path / "p.csv")]) == 1
    err = _error_line(capsys)
    assert err["error"] == "WidthMismatch"
    assert "model expects D = 2, got D = 5" in err["message"]


def test_grid_and_report(dataset, capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("CAUSALAFFECT_RUNS", str(tmp_path / "runs"))
    args = ["grid", "--spec", str(dataset / "spec.json"), "--run-id", "r", "--set", "k=2", *TINY]
    assert main(args) == 0
    run = tmp_path / "runs" / "r"
    rows = list(csv.DictReader(open(run / "matrix.csv")))
    assert len(rows) == 5
    cfg = json.loads((run / "config.json").read_text())
    assert cfg["config"]["tcn"]["epochs"] == 10 and cfg["profile"] == "desk"
    capsys.readouterr()
    # a second run into the same directory needs --resume
    assert main(args) == 1
    assert _error_line(capsys)["error"] == "RunExists"
    assert main([*args, "--resume"]) == 0
    (run / "matrix.txt").unlink()
    assert main(["report", str(run)]) == 0
    assert (run / "matrix.txt").exists()


def test_unknown_override_is_one_line_error(dataset, capsys):
    assert main(["grid", "--spec", str(dataset / "spec.json"), "--set", "tcn.bogus=1"]) == 1
    err = _error_line(capsys)
    assert err["error"] == "ValueError" and "tcn.bogus" in err["message"]


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "causalaffect", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "gradcheck" in out.stdout
