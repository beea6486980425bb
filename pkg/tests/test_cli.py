from __future__ import annotations

import json
import subprocess
import sys

import pytest

from curbgraph.cli import main

SMALL = "tiles = [1, 1]\ntile_size = 1000\nseed = 3\n"
AFA = SMALL + ('mode = "afa"\nd_model = 8\nlayers = 1\nepochs = 2\npretrain_epochs = 1\n'
               "train_instances = 2\ntrain_patch = 256\n")


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    (d / "small.toml").write_text(SMALL)
    assert main(["run-all", "--out", str(d / "out"), "--config", str(d / "small.toml")]) == 0
    return d / "out"


def test_run_all_writes_every_stage(run_dir, capsys):
    for name in ("gt.json", "frames.json", "keypoints.json", "stitched.json", "report.json",
                 "report.txt", "stitched.svg", "overlay.png", "config.toml"):
        assert (run_dir / name).is_file(), name
    for kind in ("labels", "maps", "vertices", "graphs"):
        assert any((run_dir / kind).iterdir()), kind
    report = json.loads((run_dir / "report.json").read_text())
    assert "workers" not in (run_dir / "config.toml").read_text()
    city = report["city"] if "city" in report else report
    assert city["pixel"][0]["f1"] >= 0.95


def test_eval_of_a_graph_against_itself_is_perfect(run_dir, capsys):
    gt = str(run_dir / "gt.json")
    assert main(["eval", "--out", str(run_dir), "--gt", gt, "--pred", gt]) == 0
    out = capsys.readouterr().out
    assert "APLS" in out
    rows = [line.split() for line in out.splitlines() if line.startswith(("city", "patch"))]
    assert rows and all(set(r[1:-1]) == {"1.0000"} for r in rows)


def test_single_stage_reruns_from_files(run_dir, capsys):
    assert main(["stitch", "--out", str(run_dir)]) == 0
    assert "stitch:" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["labels", "--out", "{tmp}/empty"],
    ["synth", "--out", "{tmp}/o", "--config", "{tmp}/missing.toml"],
    ["synth", "--out", "{tmp}/o", "--config", "{tmp}/bad.toml"],
    ["adjacency", "--out", "{tmp}/o", "--train"],
    ["eval", "--out", "{tmp}/o", "--gt", "{tmp}/bad.toml"],
])
def test_errors_exit_with_one_and_a_diagnostic(tmp_path, capsys, argv):
    (tmp_path / "bad.toml").write_text("seed = [\n")
    assert main([a.format(tmp=tmp_path) for a in argv]) == 1
    err = capsys.readouterr().err
    assert err.startswith(f"curbgraph {argv[0]}:") and "Traceback" not in err


def test_afa_training_prints_epochs(tmp_path, capsys):
    (tmp_path / "afa.toml").write_text(AFA)
    out = tmp_path / "out"
    assert main(["run-all", "--out", str(out), "--config", str(tmp_path / "afa.toml"), "--train"]) == 0
    text = capsys.readouterr().out
    assert "pretrain epoch   1" in text and "train epoch   2" in text
    assert "training: initial loss" in text
    assert (out / "afa.ckpt").is_file() and (out / "afa.ckpt.json").is_file()


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "curbgraph", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "run-all" in res.stdout
